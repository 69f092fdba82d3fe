#include "hesslab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include <Eigen/Dense>

#include "hesslab/errors.hpp"

namespace hesslab {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::diagonal(std::span<const double> diag) {
    Matrix m(diag.size(), diag.size());
    for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
    return m;
}

Vector Matrix::col(std::size_t c) const {
    Vector out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
}

Matrix Matrix::transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
}

double Matrix::max_abs() const { return hesslab::max_abs(data_); }

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw DimensionError("matmul: inner dimensions differ");
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto orow = out.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            auto brow = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

Vector matvec(const Matrix& a, std::span<const double> x) {
    if (a.cols() != x.size()) throw DimensionError("matvec: dimension mismatch");
    Vector y(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) y[i] = dot(a.row(i), x);
    return y;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    if (x.size() != y.size()) throw DimensionError("axpy: length mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

void scale(double alpha, std::span<double> x) {
    for (double& v : x) v *= alpha;
}

double max_abs(std::span<const double> a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

double cosine_sim(std::span<const double> u, std::span<const double> v) {
    const double nu = norm(u);
    const double nv = norm(v);
    if (nu == 0.0 || nv == 0.0) throw DegenerateVectorError("cosine_sim: zero-norm vector");
    return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

Matrix Tridiagonal::to_dense() const {
    const std::size_t m = diag.size();
    Matrix a(m, m);
    for (std::size_t i = 0; i < m; ++i) {
        a(i, i) = diag[i];
        if (i + 1 < m) {
            a(i, i + 1) = offdiag[i];
            a(i + 1, i) = offdiag[i];
        }
    }
    return a;
}

namespace {

// Reorders (values, column vectors) into descending order, ties by index.
EigenDecomposition sort_descending(const Vector& values, const Matrix& vectors) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
    EigenDecomposition out;
    out.values.resize(values.size());
    out.vectors = Matrix(vectors.rows(), values.size());
    for (std::size_t j = 0; j < order.size(); ++j) {
        out.values[j] = values[order[j]];
        for (std::size_t r = 0; r < vectors.rows(); ++r) out.vectors(r, j) = vectors(r, order[j]);
    }
    return out;
}

}  // namespace

EigenDecomposition eig_sym_dense(const Matrix& a) {
    if (a.rows() == 0 || a.rows() != a.cols())
        throw DimensionError("eig_sym_dense: matrix must be square and non-empty");
    const std::size_t n = a.rows();
    const double scale_ref = a.max_abs();
    double asym = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) asym = std::max(asym, std::abs(a(i, j) - a(j, i)));
    if (asym > 1e-10 * scale_ref)
        throw SymmetryError("eig_sym_dense: asymmetry " + std::to_string(asym) + " exceeds tolerance");

    Eigen::MatrixXd m(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) m(i, j) = a(i, j);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
    if (solver.info() != Eigen::Success) throw NumericError("eig_sym_dense: solver did not converge");

    Vector values(n);
    Matrix vectors(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        values[j] = solver.eigenvalues()(j);
        for (std::size_t i = 0; i < n; ++i) vectors(i, j) = solver.eigenvectors()(i, j);
    }
    return sort_descending(values, vectors);
}

EigenDecomposition eig_tridiag(const Tridiagonal& t) {
    const std::size_t n = t.diag.size();
    if (n == 0) throw DimensionError("eig_tridiag: empty matrix");
    if (t.offdiag.size() + 1 != n) throw DimensionError("eig_tridiag: offdiag must have m-1 entries");

    Vector d = t.diag;
    Vector e(n, 0.0);
    std::copy(t.offdiag.begin(), t.offdiag.end(), e.begin());
    Matrix z = Matrix::identity(n);
    constexpr double eps = std::numeric_limits<double>::epsilon();

    for (std::size_t l = 0; l < n; ++l) {
        int iter = 0;
        std::size_t m;
        do {
            for (m = l; m + 1 < n; ++m) {
                const double dd = std::abs(d[m]) + std::abs(d[m + 1]);
                if (std::abs(e[m]) <= eps * dd) break;
            }
            if (m == l) break;
            if (++iter > 60) throw NumericError("eig_tridiag: QL iteration did not converge");

            double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            double r = std::hypot(g, 1.0);
            g = d[m] - d[l] + e[l] / (g + std::copysign(r, g));
            double s = 1.0, c = 1.0, p = 0.0;
            bool underflow = false;
            for (std::size_t ii = m; ii-- > l;) {
                const double f = s * e[ii];
                const double b = c * e[ii];
                r = std::hypot(f, g);
                e[ii + 1] = r;
                if (r == 0.0) {
                    d[ii + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[ii + 1] - p;
                r = (d[ii] - g) * s + 2.0 * c * b;
                p = s * r;
                d[ii + 1] = g + p;
                g = c * r - b;
                for (std::size_t k = 0; k < n; ++k) {
                    const double zf = z(k, ii + 1);
                    z(k, ii + 1) = s * z(k, ii) + c * zf;
                    z(k, ii) = c * z(k, ii) - s * zf;
                }
            }
            if (underflow) continue;
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        } while (m != l);
    }
    return sort_descending(d, z);
}

}  // namespace hesslab
