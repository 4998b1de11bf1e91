#include "mslide/svd.hpp"

#include "mslide/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mslide {

namespace {

using Column = std::vector<double>;

constexpr double kEps = std::numeric_limits<double>::epsilon();

double dot(const Column& x, const Column& y) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        acc += x[i] * y[i];
    }
    return acc;
}

void rotate(Column& x, Column& y, double c, double s) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double xi = x[i];
        const double yi = y[i];
        x[i]            = c * xi - s * yi;
        y[i]            = s * xi + c * yi;
    }
}

struct TallSvd {
    std::vector<Column> u; // m-long, full set of m columns
    std::vector<double> sigma;
    std::vector<Column> v; // n-long, n columns
};

// Extend an orthonormal set of columns (length m) to a full basis of R^m,
// drawing candidates from the standard basis by largest residual.
void complete_basis(std::vector<Column>& basis, std::size_t m) {
    std::vector<double> residual(m, 1.0); // |P_perp e_i|^2
    for (const auto& q : basis) {
        for (std::size_t i = 0; i < m; ++i) {
            residual[i] -= q[i] * q[i];
        }
    }
    while (basis.size() < m) {
        const auto pick = static_cast<std::size_t>(std::distance(residual.begin(), std::max_element(residual.begin(), residual.end())));
        Column     r(m, 0.0);
        r[pick] = 1.0;
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto& q : basis) {
                const double proj = dot(q, r);
                for (std::size_t i = 0; i < m; ++i) {
                    r[i] -= proj * q[i];
                }
            }
        }
        const double norm = std::sqrt(dot(r, r));
        for (double& x : r) {
            x /= norm;
        }
        for (std::size_t i = 0; i < m; ++i) {
            residual[i] -= r[i] * r[i];
        }
        residual[pick] = -1.0;
        basis.push_back(std::move(r));
    }
}

// Requires m >= n. Columns of `cols` are rotated in place.
TallSvd jacobi_tall(std::vector<Column> cols, std::size_t m, std::size_t n, std::size_t rows_in, std::size_t cols_in) {
    std::vector<Column> v(n, Column(n, 0.0));
    for (std::size_t j = 0; j < n; ++j) {
        v[j][j] = 1.0;
    }

    const double      tol       = kEps * static_cast<double>(m);
    const std::size_t max_sweep = 100 * std::max(rows_in, cols_in);
    bool              converged = n < 2;
    std::size_t       sweep     = 0;
    while (!converged) {
        if (sweep == max_sweep) {
            throw SvdNonConvergence(sweep, rows_in, cols_in);
        }
        ++sweep;
        converged = true;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                const double dii = dot(cols[i], cols[i]);
                const double djj = dot(cols[j], cols[j]);
                const double dij = dot(cols[i], cols[j]);
                if (dii == 0.0 || djj == 0.0 || std::abs(dij) <= tol * std::sqrt(dii) * std::sqrt(djj)) {
                    continue;
                }
                converged         = false;
                const double zeta = (djj - dii) / (2.0 * dij);
                double       t    = 0.0;
                if (std::abs(zeta) > 1e150) {
                    t = 0.5 / zeta;
                } else {
                    t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                }
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                rotate(cols[i], cols[j], c, s);
                rotate(v[i], v[j], c, s);
            }
        }
    }

    std::vector<double> norms(n);
    for (std::size_t j = 0; j < n; ++j) {
        norms[j] = std::sqrt(dot(cols[j], cols[j]));
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });

    TallSvd out;
    out.sigma.reserve(n);
    out.v.reserve(n);
    const double sigma_max = n > 0 ? norms[order.front()] : 0.0;
    const double zero_cut  = sigma_max * kEps * static_cast<double>(std::max(m, n));
    std::vector<Column> kept;
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t j = order[r];
        out.sigma.push_back(norms[j]);
        out.v.push_back(std::move(v[j]));
        if (norms[j] > zero_cut && norms[j] > 0.0) {
            Column u = std::move(cols[j]);
            for (double& x : u) {
                x /= norms[j];
            }
            kept.push_back(std::move(u));
        }
    }
    // Numerically-zero directions get completion vectors; they trail the kept
    // ones because sigma is sorted descending.
    complete_basis(kept, m);
    out.u = std::move(kept);
    return out;
}

void fix_sign(Column& primary, Column* partner) {
    for (double x : primary) {
        if (std::abs(x) > 8.0 * kEps) {
            if (x < 0.0) {
                for (double& y : primary) {
                    y = -y;
                }
                if (partner != nullptr) {
                    for (double& y : *partner) {
                        y = -y;
                    }
                }
            }
            return;
        }
    }
}

Matrix from_columns(const std::vector<Column>& cols, std::size_t rows) {
    Matrix out(rows, cols.size());
    for (std::size_t j = 0; j < cols.size(); ++j) {
        for (std::size_t i = 0; i < rows; ++i) {
            out(i, j) = cols[j][i];
        }
    }
    return out;
}

} // namespace

SvdResult svd_full(const Matrix& a) {
    if (!a.all_finite()) {
        throw Error(ErrorCode::InvalidArgument, "svd_full: input contains non-finite entries");
    }
    const std::size_t m    = a.rows();
    const std::size_t n    = a.cols();
    const bool        tall = m >= n;
    const std::size_t big  = tall ? m : n;
    const std::size_t small = tall ? n : m;

    std::vector<Column> cols(small, Column(big, 0.0));
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (tall) {
                cols[j][i] = a(i, j);
            } else {
                cols[i][j] = a(i, j);
            }
        }
    }
    TallSvd t = jacobi_tall(std::move(cols), big, small, m, n);

    // tall:  a   = U S V^T   with U = t.u (m x m), V = t.v (n x n)
    // wide:  a^T = U' S V'^T so a = V' S U'^T, i.e. U = t.v, V = t.u
    std::vector<Column>& ucols = tall ? t.u : t.v;
    std::vector<Column>& vcols = tall ? t.v : t.u;
    for (std::size_t j = 0; j < small; ++j) {
        fix_sign(ucols[j], &vcols[j]);
    }
    for (std::size_t j = small; j < ucols.size(); ++j) {
        fix_sign(ucols[j], nullptr);
    }
    for (std::size_t j = small; j < vcols.size(); ++j) {
        fix_sign(vcols[j], nullptr);
    }
    return SvdResult{from_columns(ucols, m), std::move(t.sigma), from_columns(vcols, n)};
}

Matrix reconstruct(const SvdResult& svd) {
    const Matrix s = diag_embed(svd.sigma, svd.u.rows(), svd.v.rows());
    return matmul(matmul(svd.u, s), svd.v.transpose());
}

} // namespace mslide
