#include "mslide/run.hpp"

#include "mslide/error.hpp"
#include "mslide/rng.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

namespace mslide {

namespace {

constexpr std::uint64_t kTrainSalt = 0x747261696e696e67ull;
constexpr std::uint64_t kEvalSalt  = 0x6576616c75617465ull;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

struct TaskEval {
    std::vector<std::size_t> y_true;   // local labels
    std::vector<std::size_t> class_il; // global class index predicted without task identity
    std::vector<std::size_t> task_il;  // local class predicted with the true task given
};

// Evaluates model_for(t) on the test sets of tasks 0..upto with the prompt bank
// restricted to the seen tasks.
template<typename ModelFor>
std::vector<TaskEval> evaluate(const Stream& stream, std::size_t upto, ModelFor&& model_for, bool use_tcp,
                               const RunHyper& hyper, const RunHooks& hooks) {
    std::vector<std::size_t> prefix(upto + 1);
    std::iota(prefix.begin(), prefix.end(), std::size_t{0});
    const PromptBank bank = stream.bank.reordered(prefix);

    std::vector<TaskEval> out(upto + 1);
    for (std::size_t t = 0; t <= upto; ++t) {
        const auto&       bags  = stream.tasks[t].test;
        const Checkpoint& model = model_for(t);
        if (hooks.on_test_read) {
            for (std::size_t i = 0; i < bags.size(); ++i) {
                hooks.on_test_read(upto, t, i);
            }
        }
        std::vector<Matrix> z(bags.size());
        const auto          count = static_cast<std::ptrdiff_t>(bags.size());
#pragma omp parallel for schedule(static) if (hyper.exec == kernels::Exec::Parallel)
        for (std::ptrdiff_t i = 0; i < count; ++i) {
            const auto idx = static_cast<std::size_t>(i);
            auto       rng = make_rng({kEvalSalt, stream.origin[t], idx});
            z[idx]         = forward(subsample(bags[idx], hyper.eval_k, rng).patches, model);
        }
        TaskEval& e = out[t];
        for (std::size_t i = 0; i < bags.size(); ++i) {
            const Prediction p = use_tcp ? tcp_infer(z[i], bank) : naive_infer(z[i], bank);
            e.y_true.push_back(bags[i].label);
            e.class_il.push_back(bank.class_offset(p.task_id) + p.class_id);
            e.task_il.push_back(masked_infer(z[i], bank, t).class_id);
        }
    }
    return out;
}

void fill_row(RunResult& r, const Stream& stream, std::size_t k, const std::vector<TaskEval>& evals) {
    const std::size_t total = stream.bank.total_classes();
    for (std::size_t t = 0; t <= k; ++t) {
        const TaskEval&          e   = evals[t];
        const std::size_t        off = stream.bank.class_offset(t);
        std::vector<std::size_t> truth_global(e.y_true.size());
        for (std::size_t i = 0; i < e.y_true.size(); ++i) {
            truth_global[i] = off + e.y_true[i];
        }
        r.class_il_overall.set(k, t, overall_accuracy(truth_global, e.class_il));
        r.class_il_balanced.set(k, t, balanced_accuracy(truth_global, e.class_il, total));
        r.task_il_balanced.set(k, t, balanced_accuracy(e.y_true, e.task_il, stream.bank.task(t).class_embeddings.rows()));
    }
}

MetricReport final_report(const RunResult& r, const Stream& stream, const std::vector<TaskEval>& evals, const RunHyper& hyper) {
    std::vector<std::size_t> truth;
    std::vector<std::size_t> class_il;
    std::vector<std::size_t> task_il;
    std::vector<std::size_t> sizes;
    for (std::size_t t = 0; t < evals.size(); ++t) {
        const std::size_t off = stream.bank.class_offset(t);
        for (std::size_t i = 0; i < evals[t].y_true.size(); ++i) {
            truth.push_back(off + evals[t].y_true[i]);
            class_il.push_back(evals[t].class_il[i]);
            task_il.push_back(off + evals[t].task_il[i]);
        }
        sizes.push_back(evals[t].y_true.size());
    }
    const std::size_t total = stream.bank.total_classes();
    MetricReport      m;
    m.bacc        = balanced_accuracy(truth, class_il, total);
    m.masked_bacc = balanced_accuracy(truth, task_il, total);
    m.mean_acc    = mean_acc(r.class_il_overall, hyper.mean_mode, sizes);
    if (stream.tasks.size() >= 2) {
        m.fgt = forgetting(r.class_il_overall);
        m.bwt = backward_transfer(r.class_il_overall);
    }
    if (!m.all_finite()) {
        throw Error(ErrorCode::NonFinite, fmt::format("run_stream({}): non-finite metric report", to_string(r.method)));
    }
    return m;
}

nlohmann::ordered_json matrix_json(const AccuracyMatrix& m) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < m.tasks(); ++k) {
        nlohmann::ordered_json row = nlohmann::ordered_json::array();
        for (std::size_t t = 0; t < m.tasks(); ++t) {
            if (m.defined(k, t)) {
                row.push_back(m.at(k, t));
            } else {
                row.push_back(nullptr);
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::Io, fmt::format("cannot open '{}' for writing", path.string()));
    }
    out << text;
    if (!out) {
        throw Error(ErrorCode::Io, fmt::format("write failure on '{}'", path.string()));
    }
}

} // namespace

std::string_view to_string(Method m) {
    switch (m) {
    case Method::MergeTcp: return "merge_tcp";
    case Method::MergeNaive: return "merge_naive";
    case Method::SeqFinetune: return "seq_finetune";
    case Method::ZeroShot: return "zero_shot";
    case Method::AvgMerge: return "avg_merge";
    case Method::PerTaskOracle: return "per_task_oracle";
    }
    return "unknown";
}

std::optional<Method> parse_method(std::string_view name) {
    for (Method m : all_methods()) {
        if (to_string(m) == name) {
            return m;
        }
    }
    return std::nullopt;
}

std::vector<Method> all_methods() {
    return {Method::MergeTcp, Method::MergeNaive, Method::SeqFinetune, Method::ZeroShot, Method::AvgMerge, Method::PerTaskOracle};
}

std::string StageTimings::to_json() const {
    nlohmann::ordered_json j;
    j["finetune_seconds"]  = finetune_seconds;
    j["finetune_epochs"]   = finetune_epochs;
    j["avg_epoch_seconds"] = avg_epoch_seconds;
    j["merge_seconds"]     = merge_seconds;
    j["merges"]            = merges;
    j["avg_merge_seconds"] = avg_merge_seconds;
    j["inference_seconds"] = inference_seconds;
    j["inference_slides"]  = inference_slides;
    j["slides_per_second"] = slides_per_second;
    return j.dump(2);
}

std::string RunResult::to_json() const {
    nlohmann::ordered_json j;
    j["method"]  = to_string(method);
    j["tasks"]   = task_names;
    j["metrics"] = nlohmann::ordered_json::parse(report.to_json());
    j["accuracy"]["class_il_overall"]  = matrix_json(class_il_overall);
    j["accuracy"]["class_il_balanced"] = matrix_json(class_il_balanced);
    j["accuracy"]["task_il_balanced"]  = matrix_json(task_il_balanced);
    nlohmann::ordered_json ckpts       = nlohmann::ordered_json::array();
    if (!task_models.empty()) {
        for (std::size_t t = 0; t < task_models.size(); ++t) {
            ckpts.push_back(fmt::format("checkpoints/task_{}.msld", t));
        }
    }
    j["checkpoints"]["final"] = "checkpoints/final.msld";
    j["checkpoints"]["tasks"] = ckpts;
    return j.dump(2);
}

Checkpoint base_params(const Stream& stream, const RunHyper& hyper) {
    return make_base_params(stream.bank.dim(), hyper.base_perturbation, hyper.base_seed);
}

RunResult run_stream(const Stream& stream, Method method, const RunHyper& hyper, std::uint64_t seed,
                     const RunHooks& hooks, FineTuneCache* cache) {
    const std::size_t n = stream.tasks.size();
    if (n == 0) {
        throw Error(ErrorCode::InvalidArgument, "run_stream: stream has no tasks");
    }
    RunResult r;
    r.method            = method;
    r.class_il_overall  = AccuracyMatrix(n, AccuracyKind::Overall, Setting::ClassIL);
    r.class_il_balanced = AccuracyMatrix(n, AccuracyKind::Balanced, Setting::ClassIL);
    r.task_il_balanced  = AccuracyMatrix(n, AccuracyKind::Balanced, Setting::TaskIL);
    for (const auto& t : stream.bank.tasks()) {
        r.task_names.push_back(t.name);
    }

    const Checkpoint base    = base_params(stream, hyper);
    const bool       use_tcp = method == Method::MergeTcp;

    FineTuneCache local;
    FineTuneCache& tuned = cache ? *cache : local;
    auto train_from = [&](std::size_t k, const Checkpoint& init) {
        auto rng = make_rng({seed, stream.origin[k], kTrainSalt});
        return train_task(stream.tasks[k].train, init, stream.bank.task(k).class_embeddings, hyper.train, rng,
                          [&](std::size_t bag) {
                              if (hooks.on_train_read) {
                                  hooks.on_train_read(k, k, bag);
                              }
                          });
    };
    auto fine_tune_from_base = [&](std::size_t k) -> const TrainResult& {
        auto it = tuned.find(k);
        if (it == tuned.end()) {
            it = tuned.emplace(k, train_from(k, base)).first;
        } else if (hooks.on_train_read) {
            // a cache hit still stands for reading task k's data while learning task k
            for (std::size_t i = 0; i < stream.tasks[k].train.size(); ++i) {
                hooks.on_train_read(k, k, i);
            }
        }
        return it->second;
    };
    auto account = [&](const TrainResult& tr) {
        r.timings.finetune_seconds += tr.seconds;
        r.timings.finetune_epochs += hyper.train.epochs;
    };

    MergeState             state = MergeState::init(base, hyper.scope);
    Checkpoint             model = base;
    std::vector<TaskEval>  evals;
    for (std::size_t k = 0; k < n; ++k) {
        switch (method) {
        case Method::MergeTcp:
        case Method::MergeNaive: {
            const TrainResult& tr = fine_tune_from_base(k);
            account(tr);
            r.task_models.push_back(tr.params);
            const auto start = Clock::now();
            state            = merge_step(state, tr.params, hyper.exec);
            model            = finalize(state);
            r.timings.merge_seconds += seconds_since(start);
            ++r.timings.merges;
            break;
        }
        case Method::AvgMerge: {
            const TrainResult& tr = fine_tune_from_base(k);
            account(tr);
            r.task_models.push_back(tr.params);
            const auto start = Clock::now();
            model            = average_merge(base, r.task_models);
            r.timings.merge_seconds += seconds_since(start);
            ++r.timings.merges;
            break;
        }
        case Method::SeqFinetune: {
            TrainResult tr = train_from(k, model);
            account(tr);
            model = tr.params;
            r.task_models.push_back(std::move(tr.params));
            break;
        }
        case Method::PerTaskOracle: {
            const TrainResult& tr = fine_tune_from_base(k);
            account(tr);
            r.task_models.push_back(tr.params);
            model = tr.params;
            break;
        }
        case Method::ZeroShot: break;
        }

        const bool last  = k + 1 == n;
        const auto start = Clock::now();
        if (method == Method::PerTaskOracle) {
            evals = evaluate(stream, k, [&](std::size_t t) -> const Checkpoint& { return r.task_models[t]; }, use_tcp, hyper, hooks);
        } else {
            evals = evaluate(stream, k, [&](std::size_t) -> const Checkpoint& { return model; }, use_tcp, hyper, hooks);
        }
        if (last) {
            r.timings.inference_seconds = seconds_since(start);
            for (const auto& e : evals) {
                r.timings.inference_slides += e.y_true.size();
            }
        }
        fill_row(r, stream, k, evals);
    }
    r.final_model = model;
    r.report      = final_report(r, stream, evals, hyper);

    auto& tm = r.timings;
    tm.avg_epoch_seconds = tm.finetune_epochs ? tm.finetune_seconds / static_cast<double>(tm.finetune_epochs) : 0.0;
    tm.avg_merge_seconds = tm.merges ? tm.merge_seconds / static_cast<double>(tm.merges) : 0.0;
    tm.slides_per_second = tm.inference_seconds > 0.0 ? static_cast<double>(tm.inference_slides) / tm.inference_seconds : 0.0;
    return r;
}

void write_run(const RunResult& result, const std::filesystem::path& dir, bool save_checkpoints) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw Error(ErrorCode::Io, fmt::format("cannot create '{}': {}", dir.string(), ec.message()));
    }
    write_text(dir / "metrics.json", result.report.to_json() + "\n");
    write_text(dir / "run.json", result.to_json() + "\n");
    write_text(dir / "timings.json", result.timings.to_json() + "\n");
    for (const AccuracyMatrix* m : {&result.class_il_overall, &result.class_il_balanced, &result.task_il_balanced}) {
        write_text(dir / fmt::format("acc_matrix_{}.csv", m->mode_name()), m->to_csv());
    }
    if (save_checkpoints) {
        std::filesystem::create_directories(dir / "checkpoints", ec);
        if (ec) {
            throw Error(ErrorCode::Io, fmt::format("cannot create checkpoints dir: {}", ec.message()));
        }
        save(result.final_model, dir / "checkpoints" / "final.msld");
        for (std::size_t t = 0; t < result.task_models.size(); ++t) {
            save(result.task_models[t], dir / "checkpoints" / fmt::format("task_{}.msld", t));
        }
    }
}

} // namespace mslide
