#include "mslide/config.hpp"
#include "mslide/error.hpp"

#include <doctest.h>

#include <optional>

using namespace mslide;

namespace {

std::optional<ErrorCode> code_of(const std::string& text) {
    try {
        (void)parse_run_config(text);
    } catch (const Error& e) {
        return e.code();
    }
    return std::nullopt;
}

} // namespace

TEST_SUITE("config") {

TEST_CASE("empty text gives the defaults") {
    const RunConfig c = parse_run_config("");
    CHECK(c.stream.tasks.size() == 6);
    CHECK(c.stream.dim == StreamConfig::default_six_task().dim);
    CHECK(c.folds == 3);
    CHECK(c.seeds == std::vector<std::uint64_t>{1});
    CHECK(c.orders.size() == 1);
    CHECK(c.hyper.scope == LambdaScope::Global);
    CHECK(c.hyper.mean_mode == MeanAccMode::FinalRow);
}

TEST_CASE("every section is read") {
    const RunConfig c = parse_run_config(R"([stream]
dim = 16
patches_min = 4
patches_max = 8
seed = 3
tasks = X,Y
task.X = x0:5:2,x1:4:2
task.Y = y0:3:1,y1:3:1,y2:2:2
[train]
epochs = 2
lr = 0.01
normalize = true
base_perturbation = 0.2
base_seed = 5
[merge]
scope = per_param
[run]
methods = merge_tcp, avg_merge
folds = 2
seeds = 4,5
orders = reverse
eval_k = 16
mean_acc = running_union
save_checkpoints = false
)");
    CHECK(c.stream.dim == 16);
    REQUIRE(c.stream.tasks.size() == 2);
    CHECK(c.stream.tasks[1].name == "Y");
    CHECK(c.stream.tasks[1].classes[2].n_test == 2);
    CHECK(c.stream.tasks[0].classes[0].name == "x0");
    CHECK(c.hyper.train.epochs == 2);
    CHECK(c.hyper.train.lr == 0.01);
    CHECK(c.hyper.train.normalize);
    CHECK(c.hyper.base_perturbation == 0.2);
    CHECK(c.hyper.base_seed == 5);
    CHECK(c.hyper.scope == LambdaScope::PerParameter);
    CHECK(c.methods == std::vector<Method>{Method::MergeTcp, Method::AvgMerge});
    CHECK(c.folds == 2);
    CHECK(c.seeds == std::vector<std::uint64_t>{4, 5});
    REQUIRE(c.orders.size() == 1);
    CHECK(c.orders[0].order == std::vector<std::size_t>{1, 0});
    CHECK(c.hyper.eval_k == 16);
    CHECK(c.hyper.mean_mode == MeanAccMode::RunningUnion);
    CHECK_FALSE(c.save_checkpoints);
}

TEST_CASE("order forms") {
    auto alt = parse_run_config("[run]\norders = alternating\n").orders;
    REQUIRE(alt.size() == 4);
    CHECK(alt[2].label == "alt2");
    auto ex = parse_run_config("[run]\norders = 0-5-1-4-2-3;5-4-3-2-1-0\n").orders;
    REQUIRE(ex.size() == 2);
    CHECK(ex[1].label == "order1");
    CHECK(ex[0].order == std::vector<std::size_t>{0, 5, 1, 4, 2, 3});
    CHECK(code_of("[run]\norders = 0-1-1-2-3-4\n") == ErrorCode::Config);
    CHECK(code_of("[run]\norders = 0-1-2\n") == ErrorCode::Config);
}

TEST_CASE("bad input is a config error") {
    CHECK(code_of("[stream]\ndimm = 3\n") == ErrorCode::Config);
    CHECK(code_of("[extra]\n") == ErrorCode::Config);
    CHECK(code_of("[extra]\nx = 1\n") == ErrorCode::Config);
    CHECK(code_of("[stream]\ndim = abc\n") == ErrorCode::Config);
    CHECK(code_of("[train]\nnormalize = maybe\n") == ErrorCode::Config);
    CHECK(code_of("[run]\nmethods = merge_fast\n") == ErrorCode::Config);
    CHECK(code_of("[merge]\nscope = local\n") == ErrorCode::Config);
    CHECK(code_of("[run]\nmean_acc = best\n") == ErrorCode::Config);
    CHECK(code_of("[stream]\ntasks = A\n") == ErrorCode::Config);
    CHECK(code_of("[stream]\ntasks = A\ntask.A = a:1\n") == ErrorCode::Config);
    CHECK(code_of("[stream]\ntasks = A\ntask.A = a:3:1\n") == ErrorCode::Config);
    CHECK(code_of("[stream]\nsignal_fraction = 1.5\n") == ErrorCode::Config);
    CHECK(code_of("[run]\nfolds = 0\n") == ErrorCode::Config);
    CHECK(code_of("not ini [") == ErrorCode::Config);
    CHECK_THROWS_AS(load_run_config("/nonexistent/x.ini"), Error);
}

TEST_CASE("reference lists every key") {
    const std::string ref = config_reference();
    for (const char* key : {"dim", "signal_fraction", "epochs", "normalize", "scope", "methods", "orders", "mean_acc"}) {
        CHECK(ref.find(key) != std::string::npos);
    }
}

}
