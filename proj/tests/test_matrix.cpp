#include "mslide/error.hpp"
#include "mslide/matrix.hpp"
#include "oracles.hpp"

#include <doctest.h>

using namespace mslide;

TEST_SUITE("matrix") {

TEST_CASE("zero dimensions are rejected") {
    CHECK_THROWS_AS(Matrix(0, 3), Error);
    CHECK_THROWS_AS(Matrix(2, 0), Error);
    CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>(3)), Error);
}

TEST_CASE("matmul matches the triple loop exactly") {
    auto rng = make_rng({1});
    for (std::size_t r : {1, 3, 17, 64}) {
        for (std::size_t k : {1, 5, 33}) {
            for (std::size_t c : {1, 2, 40}) {
                const Matrix a = oracle::random_matrix(r, k, rng);
                const Matrix b = oracle::random_matrix(k, c, rng);
                CHECK(matmul(a, b) == oracle::matmul(a, b));
            }
        }
    }
}

TEST_CASE("shape mismatches throw Shape") {
    const Matrix a(2, 3), b(2, 3), c(4, 2);
    try {
        (void)matmul(a, b);
        FAIL("expected a shape error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Shape);
    }
    CHECK_THROWS_AS(add(a, c), Error);
    CHECK_THROWS_AS(hadamard(a, c), Error);
    CHECK_THROWS_AS(frobenius_inner(a, c), Error);
}

TEST_CASE("elementwise helpers") {
    const Matrix a{{1, 2}, {3, 4}};
    const Matrix b{{5, 6}, {7, 8}};
    CHECK(add(a, b) == Matrix{{6, 8}, {10, 12}});
    CHECK(sub(b, a) == Matrix{{4, 4}, {4, 4}});
    CHECK(scale(a, 2.0) == Matrix{{2, 4}, {6, 8}});
    CHECK(axpy(a, 0.5, b) == Matrix{{3.5, 5}, {6.5, 8}});
    CHECK(hadamard(a, b) == Matrix{{5, 12}, {21, 32}});
    CHECK(frobenius_inner(a, b) == doctest::Approx(70.0));
    CHECK(frobenius_norm(a) == doctest::Approx(std::sqrt(30.0)));
    CHECK(a.transpose() == Matrix{{1, 3}, {2, 4}});
    CHECK(max_abs_diff(a, b) == 4.0);
}

TEST_CASE("diag_embed places values on the leading diagonal") {
    const std::vector<double> s{3, 2};
    const Matrix              d = diag_embed(s, 3, 2);
    CHECK(d == Matrix{{3, 0}, {0, 2}, {0, 0}});
}

TEST_CASE("all_finite flags NaN and Inf") {
    Matrix m(2, 2);
    CHECK(m.all_finite());
    m(1, 1) = std::nan("");
    CHECK_FALSE(m.all_finite());
    m(1, 1) = INFINITY;
    CHECK_FALSE(m.all_finite());
}

}
