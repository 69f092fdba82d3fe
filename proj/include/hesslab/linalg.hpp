#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace hesslab {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);

    static Matrix identity(std::size_t n);
    static Matrix diagonal(std::span<const double> diag);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    Vector col(std::size_t c) const;

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    Matrix transpose() const;
    double max_abs() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Vector matvec(const Matrix& a, std::span<const double> x);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void scale(double alpha, std::span<double> x);
double max_abs(std::span<const double> a);

// u.v / (|u||v|); throws DegenerateVectorError for a zero-norm argument.
double cosine_sim(std::span<const double> u, std::span<const double> v);

// Symmetric tridiagonal matrix: diag has m entries, offdiag m-1.
struct Tridiagonal {
    Vector diag;
    Vector offdiag;

    std::size_t size() const { return diag.size(); }
    Matrix to_dense() const;
};

// Eigenvalues sorted descending (ties by ascending original index);
// eigenvectors stored as the matching columns of `vectors`.
struct EigenDecomposition {
    Vector values;
    Matrix vectors;
};

// Dense symmetric eigensolver used as the reference oracle.
EigenDecomposition eig_sym_dense(const Matrix& a);

// Implicit-shift QL on a symmetric tridiagonal matrix.
EigenDecomposition eig_tridiag(const Tridiagonal& t);

}  // namespace hesslab
