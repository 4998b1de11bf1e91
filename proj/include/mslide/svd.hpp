#pragma once

#include "mslide/matrix.hpp"

#include <cstddef>
#include <vector>

namespace mslide {

/// Full SVD a = u * diag_embed(sigma, m, n) * v^T.
///
/// u is m x m and v is n x n, both orthogonal; sigma holds min(m, n)
/// non-negative values in descending order. For every j < min(m, n) the
/// first nonzero entry of u's column j is non-negative (v's column flips with
/// it); completion columns follow the same rule on their own.
struct SvdResult {
    Matrix              u;
    std::vector<double> sigma;
    Matrix              v;
};

/// One-sided Jacobi. Throws SvdNonConvergence after 100 * max(m, n) sweeps.
SvdResult svd_full(const Matrix& a);

/// u * diag_embed(sigma) * v^T
Matrix reconstruct(const SvdResult& svd);

} // namespace mslide
