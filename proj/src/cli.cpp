#include "mslide/cli.hpp"

#include "mslide/checkpoint.hpp"
#include "mslide/config.hpp"
#include "mslide/error.hpp"
#include "mslide/merge.hpp"
#include "mslide/rng.hpp"
#include "mslide/run.hpp"
#include "mslide/stream.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>
#include <omp.h>

#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace mslide {

namespace {

namespace fs = std::filesystem;
using json   = nlohmann::ordered_json;

constexpr std::uint64_t kCliTrainSalt = 0x636c692d7472ull;

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out || !(out << text)) {
        throw Error(ErrorCode::Io, fmt::format("cannot write '{}'", path.string()));
    }
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::Io, fmt::format("cannot read '{}'", path.string()));
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

RunConfig config_or_default(const std::string& path) {
    return path.empty() ? RunConfig{} : load_run_config(path);
}

std::vector<Method> parse_methods(const std::string& list) {
    std::vector<Method> out;
    std::stringstream   in(list);
    std::string         name;
    while (std::getline(in, name, ',')) {
        auto m = parse_method(name);
        if (!m) {
            throw Error(ErrorCode::Config, fmt::format("unknown method '{}'", name));
        }
        out.push_back(*m);
    }
    if (out.empty()) {
        throw Error(ErrorCode::Config, "--methods is empty");
    }
    return out;
}

int cmd_gen_stream(const std::string& config, const std::string& out, std::optional<std::uint64_t> seed,
                   std::uint64_t fold) {
    RunConfig cfg = config_or_default(config);
    if (seed) {
        cfg.stream.stream_seed = *seed;
    }
    cfg.stream.fold = fold;
    const Stream s  = gen_stream(cfg.stream);
    save_stream(s, out);
    Checkpoint base = base_params(s, cfg.hyper);
    base.set_meta("kind", "base");
    save(base, fs::path(out) / "base.msld");
    std::size_t bags = 0;
    for (const auto& t : s.tasks) {
        bags += t.train.size() + t.test.size();
    }
    fmt::print("wrote {} tasks, {} bags, dim {} to {}\n", s.tasks.size(), bags, s.bank.dim(), out);
    return 0;
}

int cmd_train_task(const std::string& stream_dir, std::size_t task, const std::string& base_path,
                   const std::string& out, const std::string& config, std::uint64_t seed) {
    const RunConfig cfg = config_or_default(config);
    const Stream    s   = load_stream(stream_dir);
    if (task >= s.tasks.size()) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("--task {} out of range, stream has {} tasks", task, s.tasks.size()));
    }
    const Checkpoint base = load(base_path);
    check_params(base, s.bank.dim());
    TrainHyper hyper = cfg.hyper.train;
    auto       rng   = make_rng({seed, s.origin[task], kCliTrainSalt});
    TrainResult r    = train_task(s.tasks[task].train, base, s.bank.task(task).class_embeddings, hyper, rng);
    r.params.set_meta("kind", "task");
    r.params.set_meta("task_id", std::to_string(task));
    r.params.set_meta("task_name", s.bank.task(task).name);
    r.params.set_meta("epochs", std::to_string(hyper.epochs));
    save(r.params, out);
    fmt::print("task {} ({}): final loss {:.6f} in {:.2f}s\n", task, s.bank.task(task).name,
               r.history.empty() ? 0.0 : r.history.back(), r.seconds);
    return 0;
}

int cmd_merge(const std::string& state_arg, const std::string& base_path, const std::string& new_path,
              const std::string& out, bool per_param, bool report) {
    MergeState state;
    if (state_arg == "init") {
        if (base_path.empty()) {
            throw Error(ErrorCode::InvalidArgument, "--state init requires --base");
        }
        state = MergeState::init(load(base_path), per_param ? LambdaScope::PerParameter : LambdaScope::Global);
    } else {
        state = load_state(state_arg);
        if (!base_path.empty() && !(load(base_path).entries() == state.base.entries())) {
            throw Error(ErrorCode::InvalidArgument, "--base differs from the base stored in --state");
        }
    }
    ProjectionReport rep;
    state = merge_step(state, load(new_path), kernels::Exec::Parallel, &rep);
    fs::create_directories(out);
    save_state(state, fs::path(out) / "state.msld");
    save(finalize(state), fs::path(out) / "merged.msld");
    if (report) {
        json j;
        j["t"]              = rep.t;
        j["lambda"]         = rep.lambda;
        j["lambda_floored"] = rep.lambda_floored;
        j["params"]         = json::array();
        for (const auto& p : rep.params) {
            j["params"].push_back({{"name", p.name},
                                   {"g_norm", p.g_norm},
                                   {"delta_norm", p.delta_norm},
                                   {"acc_norm", p.acc_norm},
                                   {"residual_inner", p.residual_inner}});
        }
        std::ofstream f(fs::path(out) / "projection.jsonl", std::ios::app);
        if (!f || !(f << j.dump() << '\n')) {
            throw Error(ErrorCode::Io, "cannot append projection.jsonl");
        }
    }
    fmt::print("merged task {} lambda {:.6g}{}\n", state.t, state.lambda, state.lambda_floored ? " (floored)" : "");
    return 0;
}

double mean_of(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) {
        s += x;
    }
    return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

double std_of(const std::vector<double>& xs) {
    const double m = mean_of(xs);
    double       s = 0.0;
    for (double x : xs) {
        s += (x - m) * (x - m);
    }
    return xs.empty() ? 0.0 : std::sqrt(s / static_cast<double>(xs.size()));
}

int cmd_run_stream(const std::string& config, const std::string& methods, const std::string& out,
                   std::optional<std::uint64_t> seed) {
    RunConfig cfg = config_or_default(config);
    if (!methods.empty()) {
        cfg.methods = parse_methods(methods);
    }
    if (seed) {
        cfg.seeds = {*seed};
    }
    // metric -> order -> method -> values over (fold, seed)
    std::map<std::string, std::map<std::string, std::map<std::string, std::vector<double>>>> agg;
    json runs = json::array();
    for (const auto& order : cfg.orders) {
        for (std::size_t f = 0; f < cfg.folds; ++f) {
            StreamConfig sc = cfg.stream;
            sc.fold         = f;
            Stream s        = gen_stream(sc);
            if (!order.order.empty()) {
                s = permute_tasks(s, order.order);
            }
            for (std::uint64_t sd : cfg.seeds) {
                FineTuneCache cache;
                for (Method m : cfg.methods) {
                    const RunResult r   = run_stream(s, m, cfg.hyper, sd, {}, &cache);
                    const fs::path  dir = fs::path(out) / order.label / fmt::format("fold{}_seed{}", f, sd) / std::string(to_string(m));
                    write_run(r, dir, cfg.save_checkpoints);
                    const std::string name(to_string(m));
                    agg["bacc"][order.label][name].push_back(r.report.bacc);
                    agg["masked_bacc"][order.label][name].push_back(r.report.masked_bacc);
                    agg["mean_acc"][order.label][name].push_back(r.report.mean_acc);
                    agg["fgt"][order.label][name].push_back(r.report.fgt);
                    agg["bwt"][order.label][name].push_back(r.report.bwt);
                    runs.push_back({{"order", order.label}, {"fold", f}, {"seed", sd}, {"method", name},
                                    {"bacc", r.report.bacc}, {"masked_bacc", r.report.masked_bacc},
                                    {"mean_acc", r.report.mean_acc}, {"fgt", r.report.fgt}, {"bwt", r.report.bwt}});
                    fmt::print("{:<10} fold {} seed {} {:<16} bacc {:.4f} masked {:.4f} mean_acc {:.4f} fgt {:.4f} bwt {:.4f}\n",
                               order.label, f, sd, name, r.report.bacc, r.report.masked_bacc, r.report.mean_acc,
                               r.report.fgt, r.report.bwt);
                }
            }
        }
    }
    json summary;
    summary["runs"] = runs;
    json by         = json::object();
    for (const auto& [metric, orders] : agg) {
        for (const auto& [order, per_method] : orders) {
            for (const auto& [method, values] : per_method) {
                by[order][method][metric] = {{"mean", mean_of(values)}, {"std", std_of(values)}, {"n", values.size()}};
            }
        }
    }
    summary["by_order"] = by;
    if (cfg.orders.size() > 1) {
        // spread across orders of the per-order mean
        json across = json::object();
        for (const auto& [metric, orders] : agg) {
            std::map<std::string, std::vector<double>> per_method;
            for (const auto& [order, pm] : orders) {
                for (const auto& [method, values] : pm) {
                    per_method[method].push_back(mean_of(values));
                }
            }
            for (const auto& [method, values] : per_method) {
                across[method][metric] = {{"mean", mean_of(values)}, {"std", std_of(values)}};
            }
        }
        summary["across_orders"] = across;
    }
    write_text(fs::path(out) / "summary.json", summary.dump(2) + "\n");
    return 0;
}

int cmd_report(const std::string& dir, bool as_json) {
    const fs::path root(dir);
    json           rows = json::array();
    if (fs::exists(root / "summary.json")) {
        json s;
        try {
            s = json::parse(read_text(root / "summary.json"));
        } catch (const json::parse_error& e) {
            throw Error(ErrorCode::Io, fmt::format("summary.json: {}", e.what()));
        }
        for (const auto& [order, methods] : s.at("by_order").items()) {
            for (const auto& [method, metrics] : methods.items()) {
                json row = {{"order", order}, {"method", method}};
                for (const auto& [metric, stat] : metrics.items()) {
                    row[metric]          = stat.at("mean");
                    row[metric + "_std"] = stat.at("std");
                }
                rows.push_back(row);
            }
        }
    } else if (fs::exists(root / "metrics.json")) {
        json row = json::parse(read_text(root / "metrics.json"));
        if (fs::exists(root / "timings.json")) {
            row["timings"] = json::parse(read_text(root / "timings.json"));
        }
        rows.push_back(row);
    } else {
        throw Error(ErrorCode::Io, fmt::format("'{}' has neither summary.json nor metrics.json", dir));
    }
    if (as_json) {
        fmt::print("{}\n", rows.dump(2));
        return 0;
    }
    fmt::print("{:<10} {:<16} {:>8} {:>8} {:>8} {:>8} {:>8}\n", "order", "method", "bacc", "masked", "mean_acc", "fgt", "bwt");
    for (const auto& r : rows) {
        fmt::print("{:<10} {:<16} {:>8.4f} {:>8.4f} {:>8.4f} {:>8.4f} {:>8.4f}\n", r.value("order", "-"),
                   r.value("method", "-"), r.at("bacc").get<double>(), r.at("masked_bacc").get<double>(),
                   r.at("mean_acc").get<double>(), r.at("fgt").get<double>(), r.at("bwt").get<double>());
        if (r.contains("timings")) {
            const auto& t = r["timings"];
            fmt::print("  avg epoch {:.4f}s, avg merge {:.4f}s, {:.1f} slides/s\n", t.value("avg_epoch_seconds", 0.0),
                       t.value("avg_merge_seconds", 0.0), t.value("slides_per_second", 0.0));
        }
    }
    return 0;
}

} // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"mslide: continual model merging and lifelong-learning simulation"};
    app.require_subcommand(1);
    app.footer(config_reference());
    int jobs = 0;
    app.add_option("-j,--jobs", jobs, "OpenMP threads (0 = runtime default)")->check(CLI::NonNegativeNumber);

    std::string config, out, stream_dir, base, state_arg, new_path, methods, report_dir;
    std::optional<std::uint64_t> seed;
    std::uint64_t                fold = 0, train_seed = 1;
    std::size_t                  task = 0;
    bool                         per_param = false, report = false, as_json = false;

    auto* gen = app.add_subcommand("gen-stream", "generate a synthetic task stream and base weights");
    gen->add_option("--config", config, "INI config file")->check(CLI::ExistingFile);
    gen->add_option("--out", out, "output directory")->required();
    gen->add_option("--seed", seed, "stream seed (overrides [stream] seed)");
    gen->add_option("--fold", fold, "fold id");

    auto* train = app.add_subcommand("train-task", "fine-tune the aggregator on one task of a stream");
    train->add_option("--stream", stream_dir, "stream directory")->required()->check(CLI::ExistingDirectory);
    train->add_option("--task", task, "task position")->required();
    train->add_option("--base", base, "base checkpoint")->required();
    train->add_option("--out", out, "output checkpoint")->required();
    train->add_option("--config", config, "INI config file ([train] section)")->check(CLI::ExistingFile);
    train->add_option("--seed", train_seed, "training seed");

    auto* merge = app.add_subcommand("merge", "fold one fine-tuned checkpoint into a merge state");
    merge->add_option("--state", state_arg, "merge state file, or 'init' to start from --base")->required();
    merge->add_option("--base", base, "base checkpoint");
    merge->add_option("--new", new_path, "fine-tuned checkpoint to merge")->required();
    merge->add_option("--out", out, "output directory (state.msld, merged.msld)")->required();
    merge->add_flag("--per-param", per_param, "per-parameter lambda schedule (with --state init)");
    merge->add_flag("--report", report, "append projection diagnostics to projection.jsonl");

    auto* run = app.add_subcommand("run-stream", "run methods over folds, seeds and task orders");
    run->add_option("--config", config, "INI config file")->check(CLI::ExistingFile);
    run->add_option("--methods", methods, "comma list overriding [run] methods");
    run->add_option("--out", out, "output directory")->required();
    run->add_option("--seed", seed, "single training seed overriding [run] seeds");

    auto* rep = app.add_subcommand("report", "summarise a run directory");
    rep->add_option("dir", report_dir, "run-stream output or single run directory")->required();
    rep->add_flag("--json", as_json, "machine-readable output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (jobs > 0) {
            omp_set_num_threads(jobs);
        }
        if (*gen) {
            return cmd_gen_stream(config, out, seed, fold);
        }
        if (*train) {
            return cmd_train_task(stream_dir, task, base, out, config, train_seed);
        }
        if (*merge) {
            return cmd_merge(state_arg, base, new_path, out, per_param, report);
        }
        if (*run) {
            return cmd_run_stream(config, methods, out, seed);
        }
        return cmd_report(report_dir, as_json);
    } catch (const Error& e) {
        std::cerr << "error: code=" << to_string(e.code()) << " msg=" << e.what() << '\n';
        return exit_code_for(e.code());
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: code=io msg=" << e.what() << '\n';
        return 3;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: code=io msg=" << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: code=internal msg=" << e.what() << '\n';
        return 1;
    }
}

} // namespace mslide
