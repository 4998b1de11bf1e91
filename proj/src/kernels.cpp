#include "mslide/kernels.hpp"

#include <omp.h>

#include <cstddef>

namespace mslide::kernels {

namespace {

// i-k-j order: out(i,j) still accumulates a(i,k)*b(k,j) over ascending k,
// starting from +0.0, exactly as the textbook triple loop does.
inline void matmul_row(const Matrix& a, const Matrix& b, Matrix& out, std::size_t i) {
    auto dst = out.row(i);
    for (double& v : dst) {
        v = 0.0;
    }
    const auto lhs = a.row(i);
    for (std::size_t k = 0; k < lhs.size(); ++k) {
        const double aik = lhs[k];
        const auto   rhs = b.row(k);
        for (std::size_t j = 0; j < dst.size(); ++j) {
            dst[j] += aik * rhs[j];
        }
    }
}

constexpr std::size_t kParallelMinWork = 1u << 15;

} // namespace

namespace serial {
void matmul_into(const Matrix& a, const Matrix& b, Matrix& out) {
    for (std::size_t i = 0; i < a.rows(); ++i) {
        matmul_row(a, b, out, i);
    }
}
} // namespace serial

namespace parallel {
void matmul_into(const Matrix& a, const Matrix& b, Matrix& out) {
    const auto rows = static_cast<std::ptrdiff_t>(a.rows());
    const bool big  = a.rows() * a.cols() * b.cols() >= kParallelMinWork;
#pragma omp parallel for schedule(static) if (big)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        matmul_row(a, b, out, static_cast<std::size_t>(i));
    }
}
} // namespace parallel

void matmul_into(const Matrix& a, const Matrix& b, Matrix& out, Exec exec) {
    if (exec == Exec::Serial) {
        serial::matmul_into(a, b, out);
    } else {
        parallel::matmul_into(a, b, out);
    }
}

int max_threads() { return omp_get_max_threads(); }

} // namespace mslide::kernels
