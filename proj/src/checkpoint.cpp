#include "mslide/checkpoint.hpp"

#include "mslide/binary_io.hpp"
#include "mslide/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>

namespace mslide {

void Checkpoint::add(std::string name, Matrix value) {
    if (contains(name)) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("duplicate parameter name '{}'", name));
    }
    entries_.emplace_back(std::move(name), std::move(value));
}

void Checkpoint::set(const std::string& name, Matrix value) { at(name) = std::move(value); }

bool Checkpoint::contains(const std::string& name) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.first == name; });
}

const Matrix& Checkpoint::at(const std::string& name) const {
    for (const auto& [k, v] : entries_) {
        if (k == name) {
            return v;
        }
    }
    throw Error(ErrorCode::InvalidArgument, fmt::format("no parameter named '{}'", name));
}

Matrix& Checkpoint::at(const std::string& name) {
    return const_cast<Matrix&>(static_cast<const Checkpoint&>(*this).at(name));
}

void Checkpoint::set_meta(const std::string& key, std::string value) {
    for (auto& [k, v] : meta_) {
        if (k == key) {
            v = std::move(value);
            return;
        }
    }
    meta_.emplace_back(key, std::move(value));
}

std::optional<std::string> Checkpoint::meta(const std::string& key) const {
    for (const auto& [k, v] : meta_) {
        if (k == key) {
            return v;
        }
    }
    return std::nullopt;
}

bool shape_compatible(const Checkpoint& a, const Checkpoint& b, std::string* why) {
    const auto& x = a.entries();
    const auto& y = b.entries();
    if (x.size() != y.size()) {
        if (why) {
            *why = fmt::format("parameter count {} vs {}", x.size(), y.size());
        }
        return false;
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i].first != y[i].first || !x[i].second.same_shape(y[i].second)) {
            if (why) {
                *why = fmt::format("'{}' {} vs '{}' {}", x[i].first, x[i].second.shape_string(), y[i].first, y[i].second.shape_string());
            }
            return false;
        }
    }
    return true;
}

void require_compatible(const Checkpoint& a, const Checkpoint& b, const char* op) {
    std::string why;
    if (!shape_compatible(a, b, &why)) {
        throw Error(ErrorCode::Shape, fmt::format("{}: incompatible checkpoints: {}", op, why));
    }
}

TaskVector task_vector(const Checkpoint& theta, const Checkpoint& base) {
    require_compatible(theta, base, "task_vector");
    TaskVector out;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        out.add(theta.entries()[i].first, sub(theta.entries()[i].second, base.entries()[i].second));
    }
    return out;
}

Checkpoint apply_delta(const Checkpoint& base, const TaskVector& delta, double scale) {
    require_compatible(base, delta, "apply_delta");
    Checkpoint out;
    for (std::size_t i = 0; i < base.size(); ++i) {
        const auto& [name, b] = base.entries()[i];
        out.add(name, axpy(b, scale, delta.entries()[i].second));
    }
    for (const auto& [k, v] : base.meta_entries()) {
        out.set_meta(k, v);
    }
    return out;
}

double global_norm(const Checkpoint& c) {
    double acc = 0.0;
    for (const auto& [name, m] : c.entries()) {
        acc += frobenius_inner(m, m);
    }
    return std::sqrt(acc);
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
    binio::Writer w;
    w.bytes(kCheckpointMagic, 4);
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(c.meta_entries().size()));
    for (const auto& [k, v] : c.meta_entries()) {
        w.str(k);
        w.str(v);
    }
    w.u32(static_cast<std::uint32_t>(c.size()));
    for (const auto& [name, m] : c.entries()) {
        w.str(name);
        w.u64(m.rows());
        w.u64(m.cols());
        w.bytes(m.values().data(), m.size() * sizeof(double));
    }
    return w.take();
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    binio::Reader r(bytes);
    char          magic[4] = {};
    if (bytes.size() < 4) {
        throw Error(ErrorCode::Truncated, "truncated payload: file shorter than magic");
    }
    r.bytes(magic, 4);
    if (!std::equal(magic, magic + 4, kCheckpointMagic)) {
        throw Error(ErrorCode::BadMagic, "bad magic: not an MSLD checkpoint");
    }
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw Error(ErrorCode::VersionMismatch, fmt::format("version mismatch: file {}, supported {}", version, kCheckpointVersion));
    }
    Checkpoint          c;
    const std::uint32_t n_meta = r.u32();
    for (std::uint32_t i = 0; i < n_meta; ++i) {
        std::string k = r.str();
        std::string v = r.str();
        c.set_meta(k, std::move(v));
    }
    const std::uint32_t n_param = r.u32();
    for (std::uint32_t i = 0; i < n_param; ++i) {
        std::string         name = r.str();
        const std::uint64_t rows = r.u64();
        const std::uint64_t cols = r.u64();
        if (rows == 0 || cols == 0 || rows > (1ull << 32) || cols > (1ull << 32)) {
            throw Error(ErrorCode::Truncated, fmt::format("corrupt shape {}x{} for '{}'", rows, cols, name));
        }
        r.require_remaining(rows * cols * sizeof(double), "parameter data");
        std::vector<double> data(rows * cols);
        r.bytes(data.data(), data.size() * sizeof(double));
        c.add(std::move(name), Matrix(rows, cols, std::move(data)));
    }
    if (!r.at_end()) {
        throw Error(ErrorCode::Io, "trailing bytes after checkpoint payload");
    }
    return c;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::Io, fmt::format("cannot open '{}' for reading", path.string()));
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) {
        throw Error(ErrorCode::Io, fmt::format("read failure on '{}'", path.string()));
    }
    return bytes;
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::Io, fmt::format("cannot open '{}' for writing", path.string()));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw Error(ErrorCode::Io, fmt::format("write failure on '{}'", path.string()));
    }
}

void save(const Checkpoint& c, const std::filesystem::path& path) { write_file(path, encode_checkpoint(c)); }

Checkpoint load(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

std::string format_exact(double v) { return fmt::format("{:a}", v); }

double parse_exact(const std::string& s) {
    char*        end = nullptr;
    const double v   = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') {
        throw Error(ErrorCode::InvalidArgument, fmt::format("not a number: '{}'", s));
    }
    return v;
}

} // namespace mslide
