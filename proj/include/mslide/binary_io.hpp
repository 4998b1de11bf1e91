#pragma once

// Little-endian framing helpers shared by the .msld and .msbg formats.

#include "mslide/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

namespace mslide::binio {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u32(std::uint32_t v) { bytes(&v, 4); }
    void i32(std::int32_t v) { bytes(&v, 4); }
    void u64(std::uint64_t v) { bytes(&v, 8); }
    void f64(double v) { bytes(&v, 8); }
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }

    [[nodiscard]] std::vector<std::uint8_t> take() { return std::move(buf_); }

private:
    std::vector<std::uint8_t> buf_;
};

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& buf) : buf_(buf) {}

    void bytes(void* p, std::size_t n) {
        if (n > buf_.size() - pos_) {
            throw Error(ErrorCode::Truncated, "truncated payload at byte " + std::to_string(pos_));
        }
        std::memcpy(p, buf_.data() + pos_, n);
        pos_ += n;
    }
    std::uint8_t u8() {
        std::uint8_t v = 0;
        bytes(&v, 1);
        return v;
    }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        bytes(&v, 4);
        return v;
    }
    std::int32_t i32() {
        std::int32_t v = 0;
        bytes(&v, 4);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        bytes(&v, 8);
        return v;
    }
    double f64() {
        double v = 0;
        bytes(&v, 8);
        return v;
    }
    std::string str() {
        const std::uint32_t n = u32();
        std::string         s(n, '\0');
        bytes(s.data(), n);
        return s;
    }
    void require_remaining(std::uint64_t n, const char* what) const {
        if (n > buf_.size() - pos_) {
            throw Error(ErrorCode::Truncated, std::string("truncated payload in ") + what);
        }
    }
    [[nodiscard]] bool at_end() const noexcept { return pos_ == buf_.size(); }

private:
    const std::vector<std::uint8_t>& buf_;
    std::size_t                      pos_ = 0;
};

} // namespace mslide::binio
