#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace mslide {

/// Dense row-major matrix of doubles. Always at least 1x1.
class Matrix {
public:
    Matrix() : Matrix(1, 1) {}
    Matrix(std::size_t rows, std::size_t cols);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);
    static Matrix filled(std::size_t rows, std::size_t cols, double value);
    static Matrix row_vector(std::span<const double> values);
    static Matrix column(std::span<const double> values);

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] bool same_shape(const Matrix& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    double&       operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    const double& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    [[nodiscard]] std::span<double>       row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    [[nodiscard]] std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    [[nodiscard]] std::span<double>       values() noexcept { return data_; }
    [[nodiscard]] std::span<const double> values() const noexcept { return data_; }

    [[nodiscard]] Matrix transpose() const;
    [[nodiscard]] bool   all_finite() const noexcept;
    [[nodiscard]] std::string shape_string() const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t         rows_;
    std::size_t         cols_;
    std::vector<double> data_;
};

// Elementwise arithmetic. All throw Error{Shape} on mismatched shapes.
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
/// a + s*b
Matrix axpy(const Matrix& a, double s, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);

/// Standard product. Each output entry accumulates over k in ascending order,
/// so the result is bit-identical to a naive triple loop.
Matrix matmul(const Matrix& a, const Matrix& b);

double frobenius_inner(const Matrix& a, const Matrix& b);
double frobenius_norm(const Matrix& a);

/// m x n matrix with sigma on the leading diagonal.
Matrix diag_embed(std::span<const double> sigma, std::size_t rows, std::size_t cols);

/// Largest absolute entrywise difference.
double max_abs_diff(const Matrix& a, const Matrix& b);

} // namespace mslide
