#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace taskres {

/// Dense row-major matrix of doubles. Storage is 64-bit even though bundle
/// payloads are float32; conversion happens at the I/O boundary.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // rows * cols, row-major

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const {
        return {data.data() + r * cols, cols};
    }

    bool same_shape(const Matrix& other) const {
        return rows == other.rows && cols == other.cols;
    }

    static Matrix identity(std::size_t n);
};

/// a (m×k) * b (k×n) -> m×n
Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ (k×m)ᵀ * b (k×n) -> m×n, i.e. matmul(transpose(a), b) without the copy
Matrix matmul_at_b(const Matrix& a, const Matrix& b);
/// a (m×k) * bᵀ (n×k)ᵀ -> m×n
Matrix matmul_a_bt(const Matrix& a, const Matrix& b);

bool all_finite(const Matrix& m);
bool all_finite(std::span<const double> v);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);

}  // namespace taskres
