#pragma once

// Dense real linear algebra for small systems (d <= 8, so Kronecker
// systems up to 64 x 64). Everything here is a pure function of its inputs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ifsm/errors.hpp"
#include "ifsm/random.hpp"

namespace ifsm {

namespace detail {

inline void require_finite(std::span<const double> values, const char* what) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument(std::string(what) + ": non-finite entry");
        }
    }
}

}  // namespace detail

class Vector {
public:
    Vector() = default;

    explicit Vector(std::size_t dim) : data_(dim, 0.0) {}

    Vector(std::initializer_list<double> values) : data_(values) {
        detail::require_finite(data_, "Vector");
    }

    explicit Vector(std::vector<double> values) : data_(std::move(values)) {
        detail::require_finite(data_, "Vector");
    }

    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<const double> values() const noexcept { return data_; }
    auto begin() const noexcept { return data_.begin(); }
    auto end() const noexcept { return data_.end(); }

    bool operator==(const Vector&) const = default;

    Vector& operator+=(const Vector& o) {
        check_same(o);
        for (std::size_t i = 0; i < size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Vector& operator-=(const Vector& o) {
        check_same(o);
        for (std::size_t i = 0; i < size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Vector& operator*=(double s) {
        for (double& v : data_) v *= s;
        return *this;
    }

    friend Vector operator+(Vector a, const Vector& b) { return a += b; }
    friend Vector operator-(Vector a, const Vector& b) { return a -= b; }
    friend Vector operator*(double s, Vector a) { return a *= s; }
    friend Vector operator*(Vector a, double s) { return a *= s; }

    double dot(const Vector& o) const {
        check_same(o);
        double acc = 0.0;
        for (std::size_t i = 0; i < size(); ++i) acc += data_[i] * o.data_[i];
        return acc;
    }

    double norm2() const { return std::sqrt(dot(*this)); }

    double norm_inf() const {
        double m = 0.0;
        for (double v : data_) m = std::max(m, std::abs(v));
        return m;
    }

private:
    void check_same(const Vector& o) const {
        if (o.size() != size()) throw DimensionMismatch("Vector: size mismatch");
    }

    std::vector<double> data_;
};

/// Row-major dense matrix.
class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    Matrix(std::initializer_list<std::initializer_list<double>> rows) {
        rows_ = rows.size();
        cols_ = rows_ == 0 ? 0 : rows.begin()->size();
        data_.reserve(rows_ * cols_);
        for (const auto& row : rows) {
            if (row.size() != cols_) throw DimensionMismatch("Matrix: ragged rows");
            data_.insert(data_.end(), row.begin(), row.end());
        }
        detail::require_finite(data_, "Matrix");
    }

    static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
        Matrix m(rows.size(), rows.empty() ? 0 : rows.front().size());
        for (std::size_t i = 0; i < m.rows_; ++i) {
            if (rows[i].size() != m.cols_) throw DimensionMismatch("Matrix: ragged rows");
            std::copy(rows[i].begin(), rows[i].end(), m.data_.begin() + static_cast<std::ptrdiff_t>(i * m.cols_));
        }
        detail::require_finite(m.data_, "Matrix");
        return m;
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    static Matrix diagonal(const Vector& d) {
        Matrix m(d.size(), d.size());
        for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool is_square() const noexcept { return rows_ == cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<const double> values() const noexcept { return data_; }

    bool operator==(const Matrix&) const = default;

    Matrix transpose() const {
        Matrix t(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

    Matrix& operator+=(const Matrix& o) {
        check_same(o);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Matrix& operator-=(const Matrix& o) {
        check_same(o);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Matrix& operator*=(double s) {
        for (double& v : data_) v *= s;
        return *this;
    }

    friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
    friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
    friend Matrix operator*(double s, Matrix a) { return a *= s; }
    friend Matrix operator*(Matrix a, double s) { return a *= s; }

    friend Matrix operator*(const Matrix& a, const Matrix& b) {
        if (a.cols_ != b.rows_) throw DimensionMismatch("Matrix product: inner dimensions differ");
        Matrix c(a.rows_, b.cols_);
        for (std::size_t i = 0; i < a.rows_; ++i)
            for (std::size_t k = 0; k < a.cols_; ++k) {
                const double aik = a(i, k);
                for (std::size_t j = 0; j < b.cols_; ++j) c(i, j) += aik * b(k, j);
            }
        return c;
    }

    friend Vector operator*(const Matrix& a, const Vector& x) {
        if (a.cols_ != x.size()) throw DimensionMismatch("Matrix-vector product: size mismatch");
        Vector y(a.rows_);
        for (std::size_t i = 0; i < a.rows_; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < a.cols_; ++j) acc += a(i, j) * x[j];
            y[i] = acc;
        }
        return y;
    }

    /// Largest absolute entry.
    double max_abs() const {
        double m = 0.0;
        for (double v : data_) m = std::max(m, std::abs(v));
        return m;
    }

    /// (M + M^T) / 2.
    Matrix symmetrized() const {
        if (!is_square()) throw DimensionMismatch("symmetrized: matrix not square");
        Matrix s(rows_, cols_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) s(i, j) = 0.5 * ((*this)(i, j) + (*this)(j, i));
        return s;
    }

private:
    void check_same(const Matrix& o) const {
        if (o.rows_ != rows_ || o.cols_ != cols_) throw DimensionMismatch("Matrix: shape mismatch");
    }

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline Matrix outer(const Vector& u, const Vector& v) {
    Matrix m(u.size(), v.size());
    for (std::size_t i = 0; i < u.size(); ++i)
        for (std::size_t j = 0; j < v.size(); ++j) m(i, j) = u[i] * v[j];
    return m;
}

/// Kronecker product: block (i, j) of the result is a(i, j) * b.
inline Matrix kron(const Matrix& a, const Matrix& b) {
    const std::size_t p = b.rows();
    const std::size_t q = b.cols();
    Matrix k(a.rows() * p, a.cols() * q);
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) {
            const double aij = a(i, j);
            for (std::size_t r = 0; r < p; ++r)
                for (std::size_t c = 0; c < q; ++c) k(i * p + r, j * q + c) = aij * b(r, c);
        }
    return k;
}

/// Column-major stacking, so that vec(A M A^T) == kron(A, A) * vec(M).
inline Vector vec(const Matrix& m) {
    if (!m.is_square()) throw DimensionMismatch("vec: matrix not square");
    const std::size_t d = m.rows();
    Vector v(d * d);
    for (std::size_t j = 0; j < d; ++j)
        for (std::size_t i = 0; i < d; ++i) v[j * d + i] = m(i, j);
    return v;
}

inline Matrix unvec(const Vector& v, std::size_t d) {
    if (d == 0 || v.size() != d * d) throw DimensionMismatch("unvec: vector length is not d*d");
    Matrix m(d, d);
    for (std::size_t j = 0; j < d; ++j)
        for (std::size_t i = 0; i < d; ++i) m(i, j) = v[j * d + i];
    return m;
}

/// Relative pivot floor: a pivot is rejected when smaller than this
/// multiple of its row's initial largest magnitude.
inline constexpr double kPivotFloor = 1e-14;

/// Gaussian elimination with partial (row) pivoting.
inline Vector solve(const Matrix& m, const Vector& rhs) {
    if (!m.is_square()) throw DimensionMismatch("solve: matrix not square");
    const std::size_t n = m.rows();
    if (rhs.size() != n) throw DimensionMismatch("solve: rhs length differs from matrix order");

    std::vector<double> a(m.values().begin(), m.values().end());
    std::vector<double> b(rhs.begin(), rhs.end());
    std::vector<double> scale(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) scale[i] = std::max(scale[i], std::abs(a[i * n + j]));

    for (std::size_t k = 0; k < n; ++k) {
        std::size_t p = k;
        for (std::size_t i = k + 1; i < n; ++i)
            if (std::abs(a[i * n + k]) > std::abs(a[p * n + k])) p = i;

        const double pivot = a[p * n + k];
        if (scale[p] == 0.0 || std::abs(pivot) < kPivotFloor * scale[p]) {
            throw SingularSystem("solve: pivot " + std::to_string(pivot) + " in column " + std::to_string(k) +
                                 " is below the singularity threshold");
        }
        if (p != k) {
            std::swap_ranges(a.begin() + static_cast<std::ptrdiff_t>(k * n),
                             a.begin() + static_cast<std::ptrdiff_t>((k + 1) * n),
                             a.begin() + static_cast<std::ptrdiff_t>(p * n));
            std::swap(b[k], b[p]);
            std::swap(scale[k], scale[p]);
        }
        for (std::size_t i = k + 1; i < n; ++i) {
            const double f = a[i * n + k] / pivot;
            if (f == 0.0) continue;
            a[i * n + k] = 0.0;
            for (std::size_t j = k + 1; j < n; ++j) a[i * n + j] -= f * a[k * n + j];
            b[i] -= f * b[k];
        }
    }

    Vector x(n);
    for (std::size_t ii = n; ii-- > 0;) {
        double acc = b[ii];
        for (std::size_t j = ii + 1; j < n; ++j) acc -= a[ii * n + j] * x[j];
        x[ii] = acc / a[ii * n + ii];
    }
    return x;
}

/// ||m x - rhs||_inf
inline double residual_inf(const Matrix& m, const Vector& x, const Vector& rhs) {
    return (m * x - rhs).norm_inf();
}

struct PowerIterationOptions {
    double rel_tol = 1e-12;
    int max_iter = 10'000;
};

namespace detail {

// Returns the converged Rayleigh quotient of g (symmetric PSD), or a
// negative value when the iterate collapsed into the null space.
inline double rayleigh_power_iteration(const Matrix& g, Vector v, const PowerIterationOptions& opts) {
    double lambda_prev = -1.0;
    double lambda = 0.0;
    for (int it = 0; it < opts.max_iter; ++it) {
        Vector w = g * v;
        lambda = v.dot(w);
        const double nw = w.norm2();
        if (nw == 0.0) return -1.0;
        if (lambda_prev >= 0.0 && std::abs(lambda - lambda_prev) < opts.rel_tol * lambda) break;
        lambda_prev = lambda;
        v = (1.0 / nw) * std::move(w);
    }
    return lambda;
}

}  // namespace detail

/// Largest singular value: sqrt of the top eigenvalue of m^T m, by power
/// iteration from the normalized all-ones vector. One seeded random
/// restart is made if that start lies in the null space of m.
inline double spectral_norm(const Matrix& m, const PowerIterationOptions& opts = {}) {
    if (!m.is_square()) throw DimensionMismatch("spectral_norm: matrix not square");
    if (m.max_abs() == 0.0) return 0.0;
    const std::size_t d = m.rows();
    const Matrix g = m.transpose() * m;

    Vector start(d);
    for (std::size_t i = 0; i < d; ++i) start[i] = 1.0 / std::sqrt(static_cast<double>(d));
    double lambda = detail::rayleigh_power_iteration(g, start, opts);

    if (lambda <= 0.0) {
        Xoshiro256StarStar rng(0x5eed'0f'5eedULL);
        for (std::size_t i = 0; i < d; ++i) start[i] = rng.uniform() - 0.5;
        start *= 1.0 / start.norm2();
        lambda = detail::rayleigh_power_iteration(g, start, opts);
    }
    return std::sqrt(std::max(lambda, 0.0));
}

}  // namespace ifsm
