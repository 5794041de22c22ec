#include "gcmr/tensor.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "gcmr/error.hpp"

namespace gcmr {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw DimensionMismatch("matrix payload has " + std::to_string(data_.size()) + " values, expected " +
                                std::to_string(rows * cols));
    }
}

Matrix Matrix::from_rows(const std::vector<Vector>& rows) {
    if (rows.empty()) return {};
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != m.cols()) throw DimensionMismatch("ragged rows");
        std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
    }
    return m;
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::with_appended_rows(const Matrix& extra) const {
    if (extra.rows() == 0) return *this;
    if (rows_ != 0 && extra.cols() != cols_) throw DimensionMismatch("appended rows have different width");
    std::vector<double> data = data_;
    data.insert(data.end(), extra.data_.begin(), extra.data_.end());
    return Matrix(rows_ + extra.rows(), extra.cols(), std::move(data));
}

Matrix Matrix::with_appended_cols(const Matrix& extra) const {
    if (extra.cols() == 0) return *this;
    if (extra.rows() != rows_) throw DimensionMismatch("appended columns have different height");
    Matrix m(rows_, cols_ + extra.cols());
    for (std::size_t r = 0; r < rows_; ++r) {
        auto dst = m.row(r);
        auto a = row(r);
        auto b = extra.row(r);
        std::copy(a.begin(), a.end(), dst.begin());
        std::copy(b.begin(), b.end(), dst.begin() + static_cast<std::ptrdiff_t>(cols_));
    }
    return m;
}

Vector affine_transposed(const Matrix& w, std::span<const double> x, std::span<const double> b) {
    if (x.size() != w.rows() || b.size() != w.cols()) {
        throw DimensionMismatch("affine map expects input " + std::to_string(w.rows()) + " and bias " +
                                std::to_string(w.cols()) + ", got " + std::to_string(x.size()) + " and " +
                                std::to_string(b.size()));
    }
    Vector y(b.begin(), b.end());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double xi = x[i];
        auto wr = w.row(i);
        for (std::size_t j = 0; j < y.size(); ++j) y[j] += xi * wr[j];
    }
    return y;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionMismatch("dot of unequal lengths");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionMismatch("distance between unequal lengths");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

bool all_finite(std::span<const double> v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

bool bit_equal(std::span<const double> a, std::span<const double> b) {
    return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

bool bit_equal(const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && bit_equal(a.values(), b.values());
}

}  // namespace gcmr
