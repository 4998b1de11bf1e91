#pragma once

#include "mslide/matrix.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mslide {

/// Named parameter matrices plus a string meta table; both keep insertion
/// order, which the on-disk format preserves.
class Checkpoint {
public:
    using Entry     = std::pair<std::string, Matrix>;
    using MetaEntry = std::pair<std::string, std::string>;

    /// Appends; throws InvalidArgument on a duplicate name.
    void add(std::string name, Matrix value);
    /// Replaces an existing entry's value, keeping its position.
    void set(const std::string& name, Matrix value);

    [[nodiscard]] bool          contains(const std::string& name) const;
    [[nodiscard]] const Matrix& at(const std::string& name) const;
    [[nodiscard]] Matrix&       at(const std::string& name);

    [[nodiscard]] const std::vector<Entry>& entries() const noexcept { return entries_; }
    [[nodiscard]] std::vector<Entry>&       entries() noexcept { return entries_; }
    [[nodiscard]] std::size_t               size() const noexcept { return entries_.size(); }
    [[nodiscard]] bool                      empty() const noexcept { return entries_.empty(); }

    /// Sets (or overwrites in place) a meta value.
    void set_meta(const std::string& key, std::string value);
    [[nodiscard]] std::optional<std::string> meta(const std::string& key) const;
    [[nodiscard]] const std::vector<MetaEntry>& meta_entries() const noexcept { return meta_; }

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;

private:
    std::vector<Entry>     entries_;
    std::vector<MetaEntry> meta_;
};

/// Same structure as a Checkpoint; the values are per-parameter deltas.
using TaskVector = Checkpoint;

/// Identical name sequence and per-name shapes. On failure `why` (if given)
/// names the first mismatch.
bool shape_compatible(const Checkpoint& a, const Checkpoint& b, std::string* why = nullptr);
void require_compatible(const Checkpoint& a, const Checkpoint& b, const char* op);

/// theta - base, per parameter.
TaskVector task_vector(const Checkpoint& theta, const Checkpoint& base);
/// base + scale * delta, per parameter. Meta is taken from base.
Checkpoint apply_delta(const Checkpoint& base, const TaskVector& delta, double scale);

/// Frobenius norm of all parameters concatenated.
double global_norm(const Checkpoint& c);

// Binary format, little-endian, no padding:
//   "MSLD" | u32 version=1 | u32 meta count | {u32 len, key, u32 len, value}*
//   | u32 param count | {u32 len, name, u64 rows, u64 cols, f64 * rows*cols}*
inline constexpr char          kCheckpointMagic[4] = {'M', 'S', 'L', 'D'};
inline constexpr std::uint32_t kCheckpointVersion  = 1;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c);
Checkpoint                decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void       save(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load(const std::filesystem::path& path);

// Shared by the checkpoint and bag-file formats.
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void                      write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

/// Lossless text form of a double (hex float), used for meta values.
std::string format_exact(double v);
double      parse_exact(const std::string& s);

} // namespace mslide
