#include "mslide/checkpoint.hpp"
#include "mslide/error.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <filesystem>
#include <limits>

using namespace mslide;

namespace {

Checkpoint sample() {
    auto       rng = make_rng({10});
    Checkpoint c;
    c.add("w", oracle::random_matrix(3, 4, rng));
    c.add("b", oracle::random_matrix(1, 4, rng));
    c.set_meta("task_id", "2");
    c.set_meta("note", "unicode \xc3\xa9");
    return c;
}

ErrorCode decode_error(const std::vector<std::uint8_t>& bytes) {
    try {
        (void)decode_checkpoint(bytes);
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("decode unexpectedly succeeded");
    return ErrorCode::Io;
}

} // namespace

TEST_SUITE("checkpoint") {

TEST_CASE("encode/decode round-trips bit-exactly and keeps order") {
    const Checkpoint c = sample();
    const Checkpoint d = decode_checkpoint(encode_checkpoint(c));
    CHECK(c == d);
    CHECK(d.entries()[0].first == "w");
    CHECK(d.meta("note") == std::optional<std::string>("unicode \xc3\xa9"));
    CHECK(encode_checkpoint(d) == encode_checkpoint(c));
}

TEST_CASE("save/load through the filesystem") {
    const auto path = std::filesystem::temp_directory_path() / "mslide_test_ckpt.msld";
    save(sample(), path);
    CHECK(load(path) == sample());
    std::filesystem::remove(path);
    try {
        (void)load(path);
        FAIL("expected an io error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Io);
    }
}

TEST_CASE("malformed files are told apart") {
    auto bytes = encode_checkpoint(sample());
    auto bad   = bytes;
    bad[0]     = 'X';
    CHECK(decode_error(bad) == ErrorCode::BadMagic);
    bad    = bytes;
    bad[4] = 9;
    CHECK(decode_error(bad) == ErrorCode::VersionMismatch);
    for (std::size_t cut : {std::size_t{2}, std::size_t{6}, bytes.size() / 2, bytes.size() - 1}) {
        CHECK(decode_error(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + static_cast<long>(cut))) == ErrorCode::Truncated);
    }
    bad = bytes;
    bad.push_back(0);
    CHECK(decode_error(bad) == ErrorCode::Io);
}

TEST_CASE("duplicate names and unknown lookups") {
    Checkpoint c;
    c.add("a", Matrix(1, 1));
    CHECK_THROWS_AS(c.add("a", Matrix(1, 1)), Error);
    CHECK_THROWS_AS((void)c.at("missing"), Error);
    CHECK_FALSE(c.meta("missing").has_value());
}

TEST_CASE("task vector arithmetic") {
    const Checkpoint base = sample();
    Checkpoint       theta;
    theta.add("w", add(base.at("w"), Matrix::filled(3, 4, 0.5)));
    theta.add("b", base.at("b"));
    const TaskVector d = task_vector(theta, base);
    CHECK(max_abs_diff(d.at("w"), Matrix::filled(3, 4, 0.5)) <= 1e-15);
    CHECK(d.at("b") == Matrix(1, 4));
    CHECK(apply_delta(base, d, 1.0).at("w") == theta.at("w"));
    CHECK(global_norm(d) == doctest::Approx(std::sqrt(12 * 0.25)));
}

TEST_CASE("incompatible checkpoints are reported") {
    Checkpoint a, b;
    a.add("w", Matrix(2, 2));
    b.add("w", Matrix(2, 3));
    std::string why;
    CHECK_FALSE(shape_compatible(a, b, &why));
    CHECK(why.find("w") != std::string::npos);
    CHECK_THROWS_AS(task_vector(a, b), Error);
    Checkpoint c;
    c.add("v", Matrix(2, 2));
    CHECK_FALSE(shape_compatible(a, c));
}

TEST_CASE("exact text form of doubles") {
    for (double v : {0.0, 1.0, -2.5, 1e-300, 0.1, std::numeric_limits<double>::max()}) {
        CHECK(parse_exact(format_exact(v)) == v);
    }
}

}
