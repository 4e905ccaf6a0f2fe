#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "srsrr/error.hpp"

namespace srsrr {

using Vector = std::vector<double>;

// Dense row-major matrix, sized for covariate blocks (dimension <= ~64).
class Matrix {
public:
    Matrix() : rows_(0), cols_(0) {}
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    Matrix& operator+=(const Matrix& other) {
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
        return *this;
    }

    Matrix& scale(double c) {
        for (auto& v : data_) v *= c;
        return *this;
    }

    Matrix transposed() const {
        Matrix t(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

    Vector multiply(const Vector& v) const {
        Vector out(rows_, 0.0);
        for (std::size_t i = 0; i < rows_; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < cols_; ++j) s += (*this)(i, j) * v[j];
            out[i] = s;
        }
        return out;
    }

    Matrix multiply(const Matrix& other) const {
        Matrix out(rows_, other.cols_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t k = 0; k < cols_; ++k) {
                const double a = (*this)(i, k);
                if (a == 0.0) continue;
                for (std::size_t j = 0; j < other.cols_; ++j) out(i, j) += a * other(k, j);
            }
        return out;
    }

private:
    std::size_t rows_, cols_;
    std::vector<double> data_;
};

inline double dot(const Vector& a, const Vector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// v' M v for a square M.
inline double quad_with(const Matrix& m, const Vector& v) {
    return dot(v, m.multiply(v));
}

// Symmetric positive definite matrix with its Cholesky factor.
//
// Factorization fails (SingularMatrixError carrying the pivot index) when a
// pivot falls below the jitter floor 1e-12 * trace / d; degenerate balance
// metrics are surfaced to the caller instead of being pseudo-inverted.
class SpdMatrix {
public:
    explicit SpdMatrix(const Matrix& m, const std::string& context = "spd matrix")
        : dim_(m.rows()), chol_(m.rows(), m.rows()) {
        if (m.rows() != m.cols()) throw NumericError(context + ": matrix not square");
        double trace = 0.0;
        for (std::size_t i = 0; i < dim_; ++i) trace += m(i, i);
        const double floor = dim_ > 0 ? 1e-12 * trace / static_cast<double>(dim_) : 0.0;
        for (std::size_t i = 0; i < dim_; ++i) {
            for (std::size_t j = 0; j <= i; ++j) {
                double s = 0.5 * (m(i, j) + m(j, i));
                for (std::size_t k = 0; k < j; ++k) s -= chol_(i, k) * chol_(j, k);
                if (i == j) {
                    if (!(s > floor) || !std::isfinite(s)) {
                        throw SingularMatrixError(context + ": not positive definite",
                                                  static_cast<int>(i));
                    }
                    chol_(i, i) = std::sqrt(s);
                } else {
                    chol_(i, j) = s / chol_(j, j);
                }
            }
        }
    }

    std::size_t dim() const { return dim_; }

    // Solve M x = b.
    Vector solve(const Vector& b) const {
        Vector y = forward(b);
        // back substitution with L'
        for (std::size_t ii = dim_; ii-- > 0;) {
            double s = y[ii];
            for (std::size_t k = ii + 1; k < dim_; ++k) s -= chol_(k, ii) * y[k];
            y[ii] = s / chol_(ii, ii);
        }
        return y;
    }

    Matrix solve(const Matrix& b) const {
        Matrix out(b.rows(), b.cols());
        Vector col(b.rows());
        for (std::size_t j = 0; j < b.cols(); ++j) {
            for (std::size_t i = 0; i < b.rows(); ++i) col[i] = b(i, j);
            Vector x = solve(col);
            for (std::size_t i = 0; i < b.rows(); ++i) out(i, j) = x[i];
        }
        return out;
    }

    // v' M^{-1} v = ||L^{-1} v||^2, nonnegative by construction.
    double inverse_quadratic_form(const Vector& v) const {
        Vector y = forward(v);
        return dot(y, y);
    }

private:
    Vector forward(const Vector& b) const {
        Vector y(dim_);
        for (std::size_t i = 0; i < dim_; ++i) {
            double s = b[i];
            for (std::size_t k = 0; k < i; ++k) s -= chol_(i, k) * y[k];
            y[i] = s / chol_(i, i);
        }
        return y;
    }

    std::size_t dim_;
    Matrix chol_; // lower triangle holds L
};

// Convenience wrapper for one-shot solves against a symmetric matrix.
inline Vector spd_solve(const Matrix& m, const Vector& b,
                        const std::string& context = "spd_solve") {
    return SpdMatrix(m, context).solve(b);
}

} // namespace srsrr
