#pragma once

#include "mslide/aggregator.hpp"
#include "mslide/checkpoint.hpp"
#include "mslide/kernels.hpp"
#include "mslide/merge.hpp"
#include "mslide/metrics.hpp"
#include "mslide/stream.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mslide {

enum class Method { MergeTcp, MergeNaive, SeqFinetune, ZeroShot, AvgMerge, PerTaskOracle };

std::string_view      to_string(Method m);
std::optional<Method> parse_method(std::string_view name);
std::vector<Method>   all_methods();

struct RunHyper {
    TrainHyper    train;
    double        base_perturbation = 0.7;
    std::uint64_t base_seed         = 11;
    LambdaScope   scope             = LambdaScope::Global;
    std::size_t   eval_k            = 64;
    MeanAccMode   mean_mode         = MeanAccMode::FinalRow;
    kernels::Exec exec              = kernels::Exec::Parallel;
};

/// Wall-clock profile of one run.
struct StageTimings {
    double      finetune_seconds  = 0.0;
    std::size_t finetune_epochs   = 0;
    double      avg_epoch_seconds = 0.0;
    double      merge_seconds     = 0.0;
    std::size_t merges            = 0;
    double      avg_merge_seconds = 0.0;
    double      inference_seconds = 0.0; ///< final model over every test bag
    std::size_t inference_slides  = 0;
    double      slides_per_second = 0.0;

    [[nodiscard]] std::string to_json() const;
};

struct RunResult {
    Method                   method = Method::MergeTcp;
    std::vector<std::string> task_names;
    AccuracyMatrix           class_il_overall{1, AccuracyKind::Overall, Setting::ClassIL};
    AccuracyMatrix           class_il_balanced{1, AccuracyKind::Balanced, Setting::ClassIL};
    AccuracyMatrix           task_il_balanced{1, AccuracyKind::Balanced, Setting::TaskIL};
    MetricReport             report;
    StageTimings             timings;
    Checkpoint               final_model;
    std::vector<Checkpoint>  task_models; ///< per-task fine-tuned weights (empty for zero_shot)

    /// Everything except timings and weights; deterministic for fixed inputs.
    [[nodiscard]] std::string to_json() const;
};

/// Observes data access while a stream is processed. `processing` is the task
/// position being learned, `owner` the position whose bag is read.
struct RunHooks {
    std::function<void(std::size_t processing, std::size_t owner, std::size_t bag)> on_train_read;
    std::function<void(std::size_t processing, std::size_t owner, std::size_t bag)> on_test_read;
};

/// Per-task weights fine-tuned from the base. Shared across methods that train
/// every task from the base, for one (stream, hyper, seed) combination.
using FineTuneCache = std::map<std::size_t, TrainResult>;

Checkpoint base_params(const Stream& stream, const RunHyper& hyper);

/// Processes the stream task by task and evaluates after each task on every
/// seen test set under CLASS-IL (TCP for merge_tcp, global argmax otherwise)
/// and TASK-IL (masked).
RunResult run_stream(const Stream& stream, Method method, const RunHyper& hyper, std::uint64_t seed,
                     const RunHooks& hooks = {}, FineTuneCache* cache = nullptr);

/// Writes metrics.json, run.json, acc_matrix_<mode>.csv, timings.json and,
/// optionally, checkpoints/ into dir.
void write_run(const RunResult& result, const std::filesystem::path& dir, bool save_checkpoints);

} // namespace mslide
