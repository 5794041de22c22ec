#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace gcmr {

using Vector = std::vector<double>;

// Dense row-major matrix. Shape is fixed at construction.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix from_rows(const std::vector<Vector>& rows);
    static Matrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

    Matrix with_appended_rows(const Matrix& extra) const;
    Matrix with_appended_cols(const Matrix& extra) const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// y = W^T x + b for W of shape in x out.
Vector affine_transposed(const Matrix& w, std::span<const double> x, std::span<const double> b);

double dot(std::span<const double> a, std::span<const double> b);
double squared_distance(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);

bool all_finite(std::span<const double> v);

// Bitwise comparison; distinguishes +0/-0 and treats identical NaN payloads as equal.
bool bit_equal(std::span<const double> a, std::span<const double> b);
bool bit_equal(const Matrix& a, const Matrix& b);

}  // namespace gcmr
