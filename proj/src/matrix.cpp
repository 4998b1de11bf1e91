#include "mslide/matrix.hpp"

#include "mslide/error.hpp"
#include "mslide/kernels.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace mslide {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b)) {
        throw Error(ErrorCode::Shape, fmt::format("{}: shape mismatch {} vs {}", op, a.shape_string(), b.shape_string()));
    }
}

template<typename F>
Matrix zip(const Matrix& a, const Matrix& b, const char* op, F f) {
    require_same_shape(a, b, op);
    Matrix out(a.rows(), a.cols());
    auto   x = a.values();
    auto   y = b.values();
    auto   z = out.values();
    for (std::size_t i = 0; i < z.size(); ++i) {
        z[i] = f(x[i], y[i]);
    }
    return out;
}

} // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {
    if (rows == 0 || cols == 0) {
        throw Error(ErrorCode::Shape, fmt::format("matrix dimensions must be positive, got {}x{}", rows, cols));
    }
    data_.assign(rows * cols, 0.0);
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data) : Matrix(rows, cols) {
    if (data.size() != rows * cols) {
        throw Error(ErrorCode::Shape, fmt::format("matrix {}x{} needs {} values, got {}", rows, cols, rows * cols, data.size()));
    }
    data_ = std::move(data);
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows)
    : Matrix(rows.size(), rows.size() == 0 ? 0 : rows.begin()->size()) {
    std::size_t r = 0;
    for (const auto& row : rows) {
        if (row.size() != cols_) {
            throw Error(ErrorCode::Shape, "ragged initializer list");
        }
        std::copy(row.begin(), row.end(), data_.begin() + static_cast<std::ptrdiff_t>(r * cols_));
        ++r;
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        m(i, i) = 1.0;
    }
    return m;
}

Matrix Matrix::filled(std::size_t rows, std::size_t cols, double value) {
    Matrix m(rows, cols);
    std::fill(m.data_.begin(), m.data_.end(), value);
    return m;
}

Matrix Matrix::row_vector(std::span<const double> values) {
    return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::column(std::span<const double> values) {
    return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i) {
        for (std::size_t j = 0; j < cols_; ++j) {
            t(j, i) = (*this)(i, j);
        }
    }
    return t;
}

bool Matrix::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Matrix::shape_string() const { return fmt::format("{}x{}", rows_, cols_); }

Matrix add(const Matrix& a, const Matrix& b) {
    return zip(a, b, "add", [](double x, double y) { return x + y; });
}

Matrix sub(const Matrix& a, const Matrix& b) {
    return zip(a, b, "sub", [](double x, double y) { return x - y; });
}

Matrix scale(const Matrix& a, double s) {
    Matrix out = a;
    for (double& v : out.values()) {
        v *= s;
    }
    return out;
}

Matrix axpy(const Matrix& a, double s, const Matrix& b) {
    return zip(a, b, "axpy", [s](double x, double y) { return x + s * y; });
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    return zip(a, b, "hadamard", [](double x, double y) { return x * y; });
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw Error(ErrorCode::Shape, fmt::format("matmul: inner dimensions differ, lhs {} rhs {}", a.shape_string(), b.shape_string()));
    }
    Matrix out(a.rows(), b.cols());
    kernels::matmul_into(a, b, out, kernels::Exec::Parallel);
    return out;
}

double frobenius_inner(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "frobenius_inner");
    auto   x   = a.values();
    auto   y   = b.values();
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        acc += x[i] * y[i];
    }
    return acc;
}

double frobenius_norm(const Matrix& a) { return std::sqrt(frobenius_inner(a, a)); }

Matrix diag_embed(std::span<const double> sigma, std::size_t rows, std::size_t cols) {
    Matrix out(rows, cols);
    const std::size_t k = std::min({rows, cols, sigma.size()});
    for (std::size_t i = 0; i < k; ++i) {
        out(i, i) = sigma[i];
    }
    return out;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "max_abs_diff");
    double worst = 0.0;
    auto   x     = a.values();
    auto   y     = b.values();
    for (std::size_t i = 0; i < x.size(); ++i) {
        worst = std::max(worst, std::abs(x[i] - y[i]));
    }
    return worst;
}

} // namespace mslide
