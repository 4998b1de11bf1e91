#include "mslide/aggregator.hpp"
#include "mslide/config.hpp"
#include "mslide/merge.hpp"
#include "mslide/metrics.hpp"
#include "mslide/run.hpp"
#include "mslide/stream.hpp"
#include "mslide/svd.hpp"
#include "oracles.hpp"

#include <fmt/core.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <sys/wait.h>

using namespace mslide;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool        pass = true;
    std::string detail;
};

std::string g_cli;
fs::path    g_configs;

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) { return lo + rng() % (hi - lo + 1); }

Outcome orthogonality() {
    auto   rng   = make_rng({101});
    double worst = 0.0;
    for (int i = 0; i < 500; ++i) {
        const std::size_t m = pick(rng, 1, 64), n = pick(rng, 1, 64);
        const Matrix      acc = i % 3 == 0 ? oracle::random_low_rank(m, n, pick(rng, 0, std::min(m, n) / 2), rng)
                                           : oracle::random_matrix(m, n, rng);
        const Matrix      d   = oracle::random_matrix(m, n, rng);
        const Matrix      g   = project_orthogonal(d, acc);
        const double      lhs = std::abs(oracle::inner(g, acc));
        worst                 = std::max(worst, lhs / (1.0 + oracle::frob(g) * oracle::frob(acc)));
    }
    return {worst <= 1e-9, fmt::format("500 pairs, worst scaled |<G,acc>| {:.2e}", worst)};
}

Checkpoint random_model(std::mt19937_64& rng, double scale) {
    Checkpoint c;
    c.add("w_in", oracle::random_matrix(12, 12, rng, scale));
    c.add("w_a", oracle::random_matrix(12, 1, rng, scale));
    c.add("w_out", oracle::random_matrix(8, 12, rng, scale));
    c.add("b_out", oracle::random_matrix(8, 1, rng, scale));
    return c;
}

Outcome norm_identity() {
    auto   rng = make_rng({102});
    double rel = 0.0, excess = -1e300;
    for (int trial = 0; trial < 100; ++trial) {
        const Checkpoint  base = random_model(rng, 1.0);
        MergeState        s    = MergeState::init(base);
        const std::size_t T    = pick(rng, 2, 8);
        double            sum = 0.0, worst = 0.0;
        for (std::size_t t = 1; t <= T; ++t) {
            const double     sc = std::uniform_real_distribution<double>(0.01, 1.0)(rng);
            const Checkpoint th = apply_delta(base, random_model(rng, sc), 1.0);
            const double     dn = global_norm(task_vector(th, base));
            sum += dn;
            worst = std::max(worst, dn);
            s     = merge_step(s, th);
        }
        const double drift  = global_norm(task_vector(finalize(s), base));
        const double target = sum / static_cast<double>(T);
        rel                 = std::max(rel, std::abs(drift - target) / target);
        excess              = std::max(excess, drift - worst);
    }
    return {rel <= 1e-9 && excess <= 1e-9,
            fmt::format("100 streams, worst relative error {:.2e}, max drift - max||d|| {:.3e}", rel, excess)};
}

Outcome single_task() {
    auto   rng = make_rng({103});
    double first = 0.0, twice = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const Checkpoint base = random_model(rng, 1.0);
        const Checkpoint th   = random_model(rng, 1.0);
        const MergeState s1   = merge_step(MergeState::init(base), th);
        const MergeState s2   = merge_step(s1, th);
        const Checkpoint f1 = finalize(s1), f2 = finalize(s2);
        for (const auto& [name, m] : f1.entries()) {
            first = std::max(first, max_abs_diff(m, th.at(name)));
            twice = std::max(twice, max_abs_diff(f2.at(name), m));
        }
    }
    return {first <= 1e-12 && twice <= 1e-10,
            fmt::format("100 models, |f1 - theta| {:.2e}, |f2 - f1| {:.2e}", first, twice)};
}

Outcome svd_contract() {
    auto   rng = make_rng({104});
    double orth = 0.0, recon = 0.0, sv = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const std::size_t r = pick(rng, 1, 64), c = pick(rng, 1, 48);
        const Matrix      a = i % 4 == 0 ? oracle::random_low_rank(r, c, pick(rng, 0, std::min(r, c)), rng)
                                         : oracle::random_matrix(r, c, rng);
        const SvdResult s = svd_full(a);
        orth  = std::max({orth, oracle::orthonormality_error(s.u), oracle::orthonormality_error(s.v)});
        recon = std::max(recon, oracle::frob(sub(reconstruct(s), a)) / std::max(1.0, oracle::frob(a)));
        const auto ref = oracle::singular_values_via_gram(a);
        for (std::size_t k = 0; k < s.sigma.size(); ++k) {
            sv = std::max(sv, std::abs(s.sigma[k] - ref[k]) / std::max(1.0, ref[0]));
        }
    }
    return {orth <= 1e-10 && recon <= 1e-10 && sv <= 1e-9,
            fmt::format("1000 matrices, orthogonality {:.2e}, reconstruction {:.2e}, sigma {:.2e}", orth, recon, sv)};
}

Outcome gradient_check() {
    auto      rng   = make_rng({105});
    double    worst = 0.0;
    const std::size_t d = 8;
    for (int trial = 0; trial < 100; ++trial) {
        Checkpoint p = zero_params(d);
        for (auto& [name, m] : p.entries()) {
            m = oracle::random_matrix(m.rows(), m.cols(), rng, 0.5);
        }
        const std::size_t c  = pick(rng, 2, 4);
        const Matrix      e  = oracle::random_matrix(c, d, rng);
        const bool        nz = trial % 2 == 1;
        const Bag         bag{oracle::random_matrix(pick(rng, 2, 12), d, rng), pick(rng, 0, c - 1), 0};
        const auto        lg = loss_and_grads(bag, p, e, nz);
        for (auto& [name, m] : p.entries()) {
            for (std::size_t i = 0; i < m.size(); ++i) {
                const double num = oracle::central_difference([&] { return bag_loss(bag, p, e, nz); }, m.values()[i], 1e-6);
                const double ana = lg.grads.at(name).values()[i];
                worst = std::max(worst, std::abs(num - ana) / std::max(1.0, std::abs(num) + std::abs(ana)));
            }
        }
    }
    return {worst <= 1e-4, fmt::format("100 instances d=8, worst relative error {:.2e}", worst)};
}

Outcome metric_oracle() {
    auto   rng = make_rng({106});
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t T = pick(rng, 2, 8);
        oracle::Tri       r(T);
        std::vector<std::size_t> sizes(T);
        AccuracyMatrix    m(T, AccuracyKind::Overall, Setting::ClassIL);
        for (std::size_t k = 0; k < T; ++k) {
            sizes[k] = pick(rng, 1, 50);
            for (std::size_t t = 0; t <= k; ++t) {
                r[k].push_back(u(rng));
                m.set(k, t, r[k][t]);
            }
        }
        const std::size_t        n = pick(rng, 1, 60), c = pick(rng, 2, 6);
        std::vector<std::size_t> y(n), p(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = rng() % c;
            p[i] = rng() % c;
        }
        worst = std::max({worst, std::abs(forgetting(m) - oracle::forgetting(r)),
                          std::abs(backward_transfer(m) - oracle::backward_transfer(r)),
                          std::abs(mean_acc(m) - oracle::final_row_mean(r)),
                          std::abs(mean_acc(m, MeanAccMode::RunningUnion, sizes) - oracle::running_union_mean(r, sizes)),
                          std::abs(balanced_accuracy(y, p, c) - oracle::balanced_accuracy(y, p))});
    }
    AccuracyMatrix hand(3, AccuracyKind::Overall, Setting::ClassIL);
    const oracle::Tri h{{0.9}, {0.8, 0.85}, {0.7, 0.8, 0.9}};
    for (std::size_t k = 0; k < 3; ++k) {
        for (std::size_t t = 0; t <= k; ++t) {
            hand.set(k, t, h[k][t]);
        }
    }
    const double fgt = forgetting(hand), bwt = backward_transfer(hand);
    const bool   ok  = worst <= 1e-12 && std::abs(fgt - 0.125) <= 1e-12 && std::abs(bwt + 0.125) <= 1e-12;
    return {ok, fmt::format("1000 cases, worst {:.2e}; hand FGT {:.6f} BWT {:.6f}", worst, fgt, bwt)};
}

Outcome ordering() {
    const RunConfig cfg = load_run_config(g_configs / "default.ini");
    std::size_t     ordered = 0, fgt_ok = 0, runs = 0;
    std::string     rows;
    for (std::size_t f = 0; f < cfg.folds; ++f) {
        StreamConfig sc = cfg.stream;
        sc.fold         = f;
        const Stream s  = gen_stream(sc);
        for (std::uint64_t sd : cfg.seeds) {
            FineTuneCache cache;
            auto run = [&](Method m) { return run_stream(s, m, cfg.hyper, sd, {}, &cache).report; };
            const MetricReport tcp = run(Method::MergeTcp), naive = run(Method::MergeNaive),
                               zs = run(Method::ZeroShot), seq = run(Method::SeqFinetune);
            const bool o = tcp.bacc >= naive.bacc && naive.bacc >= zs.bacc && zs.bacc >= seq.bacc;
            ordered += o;
            fgt_ok += tcp.fgt < seq.fgt;
            ++runs;
            rows += fmt::format("\n    fold {} seed {}: tcp {:.3f} naive {:.3f} zero_shot {:.3f} seq {:.3f} | fgt tcp {:.3f} seq {:.3f}{}",
                                f, sd, tcp.bacc, naive.bacc, zs.bacc, seq.bacc, tcp.fgt, seq.fgt, o ? "" : "  <- order broken");
        }
    }
    return {runs == 9 && ordered >= 8 && fgt_ok == runs,
            fmt::format("ordering {}/{} (need 8/9), FGT {}/{}{}", ordered, runs, fgt_ok, runs, rows)};
}

double sample_std(const std::vector<double>& xs) {
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    double       ss   = 0.0;
    for (double x : xs) {
        ss += (x - mean) * (x - mean);
    }
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

Outcome order_robustness() {
    const RunConfig     cfg  = load_run_config(g_configs / "orders.ini");
    const Stream        base = gen_stream(cfg.stream);
    std::vector<double> tcp, seq;
    for (const auto& order : alternating_orders()) {
        const Stream  s = permute_tasks(base, order);
        FineTuneCache cache;
        tcp.push_back(run_stream(s, Method::MergeTcp, cfg.hyper, 1, {}, &cache).report.mean_acc);
        seq.push_back(run_stream(s, Method::SeqFinetune, cfg.hyper, 1, {}, &cache).report.mean_acc);
    }
    const double a = 100.0 * sample_std(tcp), b = 100.0 * sample_std(seq);
    return {a <= 2.0 && a < b, fmt::format("4 alternating orders, std Mean ACC merge_tcp {:.3f} pp, seq_finetune {:.3f} pp", a, b)};
}

int shell(const std::string& args) {
    const int rc = std::system((g_cli + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream     in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome determinism() {
    const fs::path root = fs::temp_directory_path() / "mslide_acceptance_det";
    fs::remove_all(root);
    const std::string tiny = " --config " + (g_configs / "tiny.ini").string();
    bool              ran  = true;
    for (const char* rep : {"a", "b"}) {
        const fs::path d    = root / rep;
        const auto     p    = [&](const std::string& s) { return (d / s).string(); };
        const auto     base = " --base " + p("s/base.msld");
        ran = ran && shell("gen-stream" + tiny + " --out " + p("s")) == 0 &&
              shell("train-task --stream " + p("s") + " --task 0" + base + " --out " + p("t0.msld") + tiny) == 0 &&
              shell("train-task --stream " + p("s") + " --task 1" + base + " --out " + p("t1.msld") + tiny) == 0 &&
              shell("merge --state init" + base + " --new " + p("t0.msld") + " --out " + p("m1") + " --report") == 0 &&
              shell("merge --state " + p("m1/state.msld") + base + " --new " + p("t1.msld") + " --out " + p("m2") +
                    " --report") == 0 &&
              shell("run-stream" + tiny + " --out " + p("run")) == 0 &&
              shell("report " + p("run") + " --json > " + p("report.json")) == 0;
    }
    if (!ran) {
        return {false, "a CLI command failed"};
    }
    std::size_t compared = 0, differing = 0;
    std::string first;
    for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
        if (!e.is_regular_file() || e.path().filename() == "timings.json") {
            continue;
        }
        const fs::path rel = fs::relative(e.path(), root / "a");
        ++compared;
        if (slurp(e.path()) != slurp(root / "b" / rel)) {
            ++differing;
            if (first.empty()) {
                first = rel.string();
            }
        }
    }
    fs::remove_all(root);
    return {compared > 0 && differing == 0,
            fmt::format("{} files compared across two invocations of every command, {} differ{}", compared, differing,
                        first.empty() ? "" : " (first: " + first + ")")};
}

Outcome no_rehearsal() {
    RunConfig cfg            = load_run_config(g_configs / "default.ini");
    cfg.hyper.train.epochs   = 2;
    const Stream s           = gen_stream(cfg.stream);
    std::size_t  violations = 0, train_reads = 0, future_tests = 0;
    for (Method m : {Method::MergeTcp, Method::MergeNaive, Method::AvgMerge}) {
        RunHooks hooks;
        hooks.on_train_read = [&](std::size_t processing, std::size_t owner, std::size_t) {
            ++train_reads;
            violations += owner != processing;
        };
        hooks.on_test_read = [&](std::size_t processing, std::size_t owner, std::size_t) {
            future_tests += owner > processing;
        };
        (void)run_stream(s, m, cfg.hyper, 1, hooks);
    }
    std::size_t expected = 0;
    for (const auto& t : s.tasks) {
        expected += t.train.size() * cfg.hyper.train.epochs;
    }
    expected *= 3;
    return {violations == 0 && future_tests == 0 && train_reads == expected,
            fmt::format("{} training reads logged (expected {}), {} from an earlier task, {} test reads of unseen tasks",
                        train_reads, expected, violations, future_tests)};
}

} // namespace

int main(int argc, char** argv) {
    if (argc < 3) {
        fmt::print(stderr, "usage: acceptance <mslide binary> <configs dir>\n");
        return 2;
    }
    g_cli     = argv[1];
    g_configs = argv[2];
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"AC1 orthogonal projection", orthogonality},
        {"AC2 norm-consistency identity", norm_identity},
        {"AC3 single-task identity", single_task},
        {"AC4 SVD contract", svd_contract},
        {"AC5 gradient check", gradient_check},
        {"AC6 metric oracle", metric_oracle},
        {"AC7 method ordering", ordering},
        {"AC8 order robustness", order_robustness},
        {"AC9 determinism", determinism},
        {"AC10 no rehearsal", no_rehearsal},
    };
    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome    o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        fmt::print("{} {} ({:.1f}s): {}\n", o.pass ? "PASS" : "FAIL", name, sec, o.detail);
        std::fflush(stdout);
        failed += !o.pass;
    }
    fmt::print("{} of {} criteria passed\n", criteria.size() - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
