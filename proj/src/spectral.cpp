#include "hesslab/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "hesslab/binio.hpp"
#include "hesslab/errors.hpp"
#include "hesslab/rng.hpp"

namespace hesslab {

namespace {

void check_finite(std::span<const double> y) {
    for (double v : y)
        if (!std::isfinite(v)) throw NumericError("operator output is not finite");
}

// w -= sum_i (q_i . w) q_i over the first `count` rows of basis.
void orthogonalize(const Matrix& basis, std::size_t count, std::span<double> w) {
    for (std::size_t i = 0; i < count; ++i) axpy(-dot(basis.row(i), w), basis.row(i), w);
}

}  // namespace

SpectrumEstimate lanczos(const LinearOperator& apply, std::size_t dim, const LanczosConfig& cfg,
                         bool want_vectors) {
    if (dim < 2) throw DimensionError("lanczos: operator dimension must be at least 2");
    if (cfg.iterations < 1) throw DimensionError("lanczos: iteration count must be positive");
    const std::size_t n_steps = std::min(cfg.iterations, dim);

    Matrix basis(n_steps, dim);
    Rng rng(cfg.seed, 0x4c414e43ULL);
    {
        auto q0 = basis.row(0);
        for (double& x : q0) x = rng.normal();
        scale(1.0 / norm(q0), q0);
    }

    Vector alpha;
    Vector beta;  // beta[j] couples q_j and q_{j+1}
    Vector w(dim);
    double max_alpha = 0.0;
    double last_beta = 0.0;
    std::size_t steps = 0;

    for (std::size_t j = 0; j < n_steps; ++j) {
        auto q = basis.row(j);
        std::fill(w.begin(), w.end(), 0.0);
        apply(q, w);
        check_finite(w);
        const double a = dot(q, w);
        alpha.push_back(a);
        axpy(-a, q, w);
        if (j > 0) axpy(-beta[j - 1], basis.row(j - 1), w);
        if (cfg.reorthogonalize) {
            // Two passes keep the basis orthogonal to working precision.
            orthogonalize(basis, j + 1, w);
            orthogonalize(basis, j + 1, w);
        }
        steps = j + 1;
        max_alpha = std::max(max_alpha, std::abs(a));
        const double b = norm(w);
        last_beta = b;
        if (j + 1 == n_steps) break;
        if (b <= 1e-12 * max_alpha) {
            last_beta = 0.0;
            break;
        }
        beta.push_back(b);
        auto next = basis.row(j + 1);
        for (std::size_t i = 0; i < dim; ++i) next[i] = w[i] / b;
    }

    Tridiagonal t;
    t.diag = alpha;
    t.offdiag.assign(beta.begin(), beta.begin() + static_cast<std::ptrdiff_t>(steps - 1));
    const EigenDecomposition eig = eig_tridiag(t);

    SpectrumEstimate out;
    out.ritz_values = eig.values;
    out.operator_dim = dim;
    out.iterations = cfg.iterations;
    out.steps = steps;
    out.residual_norms.resize(steps);
    for (std::size_t i = 0; i < steps; ++i) out.residual_norms[i] = std::abs(last_beta * eig.vectors(steps - 1, i));

    if (want_vectors) {
        // V = V_T^T V_L: Ritz vector i = sum_j s_{j,i} q_j.
        out.ritz_vectors = Matrix(steps, dim);
        for (std::size_t i = 0; i < steps; ++i) {
            auto v = out.ritz_vectors.row(i);
            for (std::size_t j = 0; j < steps; ++j) axpy(eig.vectors(j, i), basis.row(j), v);
            const double nv = norm(v);
            if (nv > 0.0) scale(1.0 / nv, v);
        }
        out.lanczos_basis = Matrix(steps, dim);
        for (std::size_t j = 0; j < steps; ++j) std::copy_n(basis.row(j).begin(), dim, out.lanczos_basis.row(j).begin());
    }
    return out;
}

LinearOperator hessian_operator(const NetworkSpec& spec, std::span<const double> theta, const Batch& batch) {
    return [&spec, theta, &batch](std::span<const double> x, std::span<double> y) {
        const Vector hv = hvp(spec, theta, batch, x);
        std::copy(hv.begin(), hv.end(), y.begin());
    };
}

LinearOperator reduced_hessian_operator(const NetworkSpec& spec, std::span<const double> theta,
                                        const Batch& batch, const ReducedParamView& view) {
    return [&spec, theta, &batch, view](std::span<const double> x, std::span<double> y) {
        const Vector hv = hvp_reduced(spec, theta, batch, view, x);
        std::copy(hv.begin(), hv.end(), y.begin());
    };
}

Matrix dense_operator(const LinearOperator& apply, std::size_t dim, std::size_t cap) {
    if (dim > cap)
        throw SizeError("dense Hessian of dimension " + std::to_string(dim) + " exceeds cap " + std::to_string(cap));
    Matrix h(dim, dim);
    Vector e(dim, 0.0);
    Vector col(dim);
    for (std::size_t j = 0; j < dim; ++j) {
        e[j] = 1.0;
        std::fill(col.begin(), col.end(), 0.0);
        apply(e, col);
        check_finite(col);
        for (std::size_t i = 0; i < dim; ++i) h(i, j) = col[i];
        e[j] = 0.0;
    }
    for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = i + 1; j < dim; ++j) {
            const double s = 0.5 * (h(i, j) + h(j, i));
            h(i, j) = s;
            h(j, i) = s;
        }
    return h;
}

Matrix dense_hessian(const NetworkSpec& spec, std::span<const double> theta, const Batch& batch, std::size_t cap) {
    return dense_operator(hessian_operator(spec, theta, batch), spec.param_count(), cap);
}

EigenCheckpoint make_checkpoint(std::int64_t epoch, const SpectrumEstimate& s, std::size_t n_vectors) {
    EigenCheckpoint cp;
    cp.epoch = epoch;
    cp.ritz_values = s.ritz_values;
    if (!s.has_vectors()) throw CheckpointMissingError("spectrum has no Ritz vectors to checkpoint");
    const std::size_t m = std::min<std::size_t>(std::max<std::size_t>(n_vectors, 1), s.ritz_vectors.rows());
    for (std::size_t i = 0; i < m; ++i) {
        auto v = s.vector(i);
        cp.vectors.emplace_back(v.begin(), v.end());
    }
    return cp;
}

namespace {
constexpr std::string_view kSpecMagic = "HSPEC1";
}

void write_checkpoints(std::ostream& os, const std::vector<EigenCheckpoint>& cps) {
    binio::put_magic(os, kSpecMagic);
    binio::put_u64(os, cps.size());
    for (const auto& cp : cps) {
        binio::put_i64(os, cp.epoch);
        binio::put_u64(os, cp.ritz_values.size());
        binio::put_f64s(os, cp.ritz_values);
        const std::size_t dim = cp.vectors.empty() ? 0 : cp.vectors.front().size();
        binio::put_u64(os, dim);
        binio::put_u64(os, cp.vectors.size());
        for (const auto& v : cp.vectors) {
            if (v.size() != dim) throw DimensionError("checkpoint vectors differ in length");
            binio::put_f64s(os, v);
        }
    }
}

std::vector<EigenCheckpoint> read_checkpoints(std::istream& is) {
    binio::expect_magic(is, kSpecMagic);
    const std::uint64_t count = binio::get_count(is);
    std::vector<EigenCheckpoint> cps;
    cps.reserve(count);
    for (std::uint64_t c = 0; c < count; ++c) {
        EigenCheckpoint cp;
        cp.epoch = binio::get_i64(is);
        cp.ritz_values.resize(binio::get_count(is));
        for (double& x : cp.ritz_values) x = binio::get_f64(is);
        const std::uint64_t dim = binio::get_count(is);
        const std::uint64_t nv = binio::get_count(is);
        cp.vectors.assign(nv, Vector(dim));
        for (auto& v : cp.vectors)
            for (double& x : v) x = binio::get_f64(is);
        cps.push_back(std::move(cp));
    }
    return cps;
}

void save_checkpoints(const std::string& path, const std::vector<EigenCheckpoint>& cps) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open " + path + " for writing");
    write_checkpoints(os, cps);
}

std::vector<EigenCheckpoint> load_checkpoints(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open " + path);
    return read_checkpoints(is);
}

}  // namespace hesslab
