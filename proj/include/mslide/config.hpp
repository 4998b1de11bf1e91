#pragma once

#include "mslide/run.hpp"
#include "mslide/stream.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mslide {

/// Named task order applied to the generated stream before a run.
struct TaskOrder {
    std::string              label; ///< directory-safe name, e.g. "identity", "alt0"
    std::vector<std::size_t> order; ///< empty means identity
};

struct RunConfig {
    StreamConfig               stream = StreamConfig::default_six_task();
    RunHyper                   hyper;
    std::vector<Method>        methods = {Method::MergeTcp, Method::MergeNaive, Method::SeqFinetune, Method::ZeroShot};
    std::size_t                folds   = 3;
    std::vector<std::uint64_t> seeds   = {1};
    std::vector<TaskOrder>     orders  = {{"identity", {}}};
    bool                       save_checkpoints = true;
};

/// INI text with sections [stream], [train], [merge], [run]. Unknown sections
/// or keys are rejected with Error{Config}.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Documentation of every recognised key, shown by --help.
std::string config_reference();

} // namespace mslide
