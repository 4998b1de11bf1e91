#pragma once

#include "mslide/aggregator.hpp"
#include "mslide/prompt.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mslide {

struct ClassSpec {
    std::string name;
    std::size_t n_train = 1;
    std::size_t n_test  = 1;
};

struct TaskSpec {
    std::string            name;
    std::vector<ClassSpec> classes;
};

struct StreamConfig {
    std::vector<TaskSpec> tasks;
    std::size_t dim             = 64;
    std::size_t patches_min     = 32;
    std::size_t patches_max     = 96;
    double      signal_fraction = 0.25;
    double      noise_std       = 0.5;
    double      rho_in          = 0.3;
    double      rho_out         = 0.0;
    std::size_t n_sites         = 1;
    double      site_shift_std  = 0.0; ///< per-site additive Gaussian shift; 0 disables sites
    std::uint64_t stream_seed   = 7;
    std::uint64_t fold          = 0;

    /// Six tasks shaped like the TCGA cohort table: per class, slides/10
    /// split into train/test (at least five test bags), then tripled.
    static StreamConfig default_six_task();

    /// Throws Config on anything out of range.
    void validate() const;
};

struct TaskData {
    std::vector<Bag> train;
    std::vector<Bag> test;

    friend bool operator==(const TaskData&, const TaskData&) = default;
};

struct Stream {
    PromptBank               bank{1};
    std::vector<TaskData>    tasks;
    std::vector<std::size_t> origin; ///< original index of each task position

    friend bool operator==(const Stream&, const Stream&) = default;
};

/// Class prototypes are the prompt embeddings. Each bag draws
/// round(signal_fraction * n) patches from N(prototype, noise^2 I) and the rest
/// from N(0, noise^2 I). Prompts depend only on stream_seed; bags also on fold.
Stream gen_stream(const StreamConfig& config);

/// `order[i]` is the current index of the task placed at position i.
Stream permute_tasks(const Stream& stream, const std::vector<std::size_t>& order);

/// The four alternating common/rare orders used for order-robustness runs
/// (indices into the default six-task stream: B R N common, E T C rare).
std::vector<std::vector<std::size_t>> alternating_orders();

// Directory layout: prompts.msld plus task_<i>.msbg per task.
// Bag file (little-endian): "MSBG" | u32 version=1 | u32 origin task | u64 dim
//   | u32 n_train | u32 n_test | per bag {u32 label, i32 site, u64 n, f64 * n*dim}
inline constexpr char          kBagMagic[4] = {'M', 'S', 'B', 'G'};
inline constexpr std::uint32_t kBagVersion  = 1;

std::vector<std::uint8_t> encode_bags(const TaskData& task, std::size_t origin, std::size_t dim);
TaskData                  decode_bags(const std::vector<std::uint8_t>& bytes, std::size_t* origin = nullptr);

void   save_stream(const Stream& stream, const std::filesystem::path& dir);
Stream load_stream(const std::filesystem::path& dir);

} // namespace mslide
