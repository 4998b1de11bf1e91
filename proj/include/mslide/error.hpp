#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mslide {

enum class ErrorCode {
    Shape,            ///< dimension or name-set mismatch
    InvalidArgument,  ///< precondition violated by a caller-supplied value
    Io,               ///< open/read/write failure
    BadMagic,
    VersionMismatch,
    Truncated,
    Config,           ///< malformed or unknown configuration
    NonConvergence,   ///< iterative kernel hit its sweep cap
    DegenerateMerge,  ///< every task vector is zero
    EmptyMerge,       ///< finalize called before any merge_step
    NonFinite,        ///< NaN/Inf surfaced in loss or metrics
    Infeasible,       ///< requested geometry cannot be realised
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what);

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

class SvdNonConvergence : public Error {
public:
    SvdNonConvergence(std::size_t sweeps, std::size_t rows, std::size_t cols);

    [[nodiscard]] std::size_t sweeps() const noexcept { return sweeps_; }

private:
    std::size_t sweeps_;
};

/// Process exit code for the CLI: 2 config, 3 I/O, 4 numerical, 1 otherwise.
int exit_code_for(ErrorCode code);

} // namespace mslide
