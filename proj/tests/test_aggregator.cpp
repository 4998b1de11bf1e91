#include "mslide/aggregator.hpp"
#include "mslide/error.hpp"
#include "mslide/prompt.hpp"
#include "mslide/stream.hpp"
#include "oracles.hpp"

#include <doctest.h>

using namespace mslide;

namespace {

Checkpoint random_params(std::size_t d, std::mt19937_64& rng) {
    Checkpoint p = zero_params(d);
    for (auto& [name, m] : p.entries()) {
        m = oracle::random_matrix(m.rows(), m.cols(), rng, 0.5);
    }
    return p;
}

} // namespace

TEST_SUITE("aggregator") {

TEST_CASE("parameter layout") {
    const Checkpoint p = zero_params(6);
    REQUIRE(p.size() == 5);
    CHECK(p.at(param::kWIn).rows() == 6);
    CHECK(p.at(param::kWIn).cols() == 6);
    CHECK(p.at(param::kBIn).rows() == 6);
    CHECK(p.at(param::kBIn).cols() == 1);
    CHECK(p.at(param::kWA).cols() == 1);
    CHECK(p.at(param::kWOut).rows() == 6);
    CHECK(p.at(param::kBOut).cols() == 1);
    CHECK_NOTHROW(check_params(make_base_params(6, 0.5, 1), 6));
    CHECK_THROWS_AS(check_params(p, 5), Error);
    CHECK(make_base_params(6, 0.5, 1) == make_base_params(6, 0.5, 1));
}

TEST_CASE("forward by hand with uniform attention") {
    const std::size_t d = 2;
    Checkpoint        p = zero_params(d);
    p.at(param::kWIn)   = Matrix::identity(d);
    p.at(param::kWOut)  = Matrix::identity(d);
    p.at(param::kBOut)  = Matrix{{0.5}, {0.0}};
    const Matrix v{{1, 0}, {0, 1}};
    const Matrix z = forward(v, p);
    const double h = std::tanh(1.0) / 2.0;
    CHECK(z(0, 0) == doctest::Approx(h + 0.5));
    CHECK(z(0, 1) == doctest::Approx(h));
}

TEST_CASE("analytic gradients match central differences") {
    auto rng = make_rng({40});
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t d  = 8;
        Checkpoint        p  = random_params(d, rng);
        const Matrix      e  = oracle::random_matrix(3, d, rng);
        const bool        nz = trial % 2 == 1;
        Bag               bag{oracle::random_matrix(5 + trial % 4, d, rng), static_cast<std::size_t>(trial % 3), 0};
        const auto        lg = loss_and_grads(bag, p, e, nz);
        CHECK(lg.loss == doctest::Approx(bag_loss(bag, p, e, nz)).epsilon(1e-12));
        for (auto& [name, m] : p.entries()) {
            const Matrix& g = lg.grads.at(name);
            for (std::size_t i = 0; i < m.size(); ++i) {
                double&      x   = m.values()[i];
                const double num = oracle::central_difference([&] { return bag_loss(bag, p, e, nz); }, x, 1e-6);
                const double ana = g.values()[i];
                CHECK(std::abs(num - ana) <= 1e-4 * std::max(1.0, std::abs(num) + std::abs(ana)));
            }
        }
    }
}

TEST_CASE("loss is a proper cross-entropy") {
    const std::size_t d = 2;
    Checkpoint        p = zero_params(d);
    p.at(param::kBOut)  = Matrix{{1.0}, {0.0}};
    const Matrix e{{1, 0}, {0, 1}};
    Bag          bag{Matrix(3, d), 0, 0};
    CHECK(bag_loss(bag, p, e) == doctest::Approx(std::log(1 + std::exp(-1.0))));
    bag.label = 1;
    CHECK(bag_loss(bag, p, e) == doctest::Approx(std::log(1 + std::exp(1.0))));
    // doubling the correct-class embedding lowers the loss when z . e > 0
    bag.label = 0;
    CHECK(bag_loss(bag, p, Matrix{{2, 0}, {0, 1}}) < bag_loss(bag, p, e));
    bag.label = 5;
    CHECK_THROWS_AS(bag_loss(bag, p, e), Error);
}

TEST_CASE("subsample keeps order and size") {
    auto   rng = make_rng({41});
    Matrix m(10, 1);
    for (std::size_t i = 0; i < 10; ++i) {
        m(i, 0) = static_cast<double>(i);
    }
    const Bag bag{m, 1, 2, 3};
    const Bag s = subsample(bag, 4, rng);
    REQUIRE(s.patches.rows() == 4);
    for (std::size_t i = 1; i < 4; ++i) {
        CHECK(s.patches(i, 0) > s.patches(i - 1, 0));
    }
    CHECK(s.label == 1);
    CHECK(s.site_id == 3);
    CHECK(subsample(bag, 20, rng) == bag);
}

TEST_CASE("training fits a linearly separable task") {
    StreamConfig cfg;
    cfg.tasks           = {{"sep", {{"a", 30, 10}, {"b", 30, 10}, {"c", 30, 10}}}};
    cfg.dim             = 8;
    cfg.patches_min     = 16;
    cfg.patches_max     = 32;
    cfg.rho_in          = 0.0;
    cfg.signal_fraction = 1.0;
    cfg.noise_std       = 0.5;
    const Stream s      = gen_stream(cfg);
    const Checkpoint base = make_base_params(8, 1.5, 3);
    TrainHyper       h;
    h.epochs          = 10;
    h.lr              = 1e-2;
    auto             rng = make_rng({42});
    std::size_t      reads = 0;
    const TrainResult r  = train_task(s.tasks[0].train, base, s.bank.task(0).class_embeddings, h, rng,
                                      [&](std::size_t) { ++reads; });
    CHECK(reads == 10 * s.tasks[0].train.size());
    REQUIRE(r.history.size() == 10);
    CHECK(r.history.back() < r.history.front());
    std::vector<std::size_t> y, p;
    for (const auto& b : s.tasks[0].train) {
        y.push_back(b.label);
        p.push_back(masked_infer(forward(b.patches, r.params), s.bank, 0).class_id);
    }
    CHECK(oracle::balanced_accuracy(y, p) >= 0.95);
}

TEST_CASE("training rejects empty input") {
    auto rng = make_rng({43});
    CHECK_THROWS_AS(train_task({}, zero_params(2), Matrix{{1, 0}, {0, 1}}, TrainHyper{}, rng), Error);
}

}
