#include "mslide/error.hpp"

#include <fmt/format.h>

namespace mslide {

std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::Shape: return "shape";
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::Io: return "io";
    case ErrorCode::BadMagic: return "bad_magic";
    case ErrorCode::VersionMismatch: return "version_mismatch";
    case ErrorCode::Truncated: return "truncated";
    case ErrorCode::Config: return "config";
    case ErrorCode::NonConvergence: return "non_convergence";
    case ErrorCode::DegenerateMerge: return "degenerate_merge";
    case ErrorCode::EmptyMerge: return "empty_merge";
    case ErrorCode::NonFinite: return "non_finite";
    case ErrorCode::Infeasible: return "infeasible";
    }
    return "unknown";
}

Error::Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

SvdNonConvergence::SvdNonConvergence(std::size_t sweeps, std::size_t rows, std::size_t cols)
    : Error(ErrorCode::NonConvergence,
            fmt::format("svd_full: no convergence after {} sweeps on {}x{} input", sweeps, rows, cols)),
      sweeps_(sweeps) {}

int exit_code_for(ErrorCode code) {
    switch (code) {
    case ErrorCode::Config:
    case ErrorCode::Shape:
    case ErrorCode::InvalidArgument:
    case ErrorCode::Infeasible: return 2;
    case ErrorCode::Io:
    case ErrorCode::BadMagic:
    case ErrorCode::VersionMismatch:
    case ErrorCode::Truncated: return 3;
    case ErrorCode::NonConvergence:
    case ErrorCode::DegenerateMerge:
    case ErrorCode::EmptyMerge:
    case ErrorCode::NonFinite: return 4;
    }
    return 1;
}

} // namespace mslide
