#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hesslab/linalg.hpp"
#include "hesslab/nn.hpp"

namespace hesslab {

// y = H x for a symmetric operator of fixed dimension.
using LinearOperator = std::function<void(std::span<const double> x, std::span<double> y)>;

struct LanczosConfig {
    std::size_t iterations = 100;  // n_L
    std::uint64_t seed = 0;
    bool reorthogonalize = true;
};

struct SpectrumEstimate {
    Vector ritz_values;  // descending
    Matrix ritz_vectors;  // one row per Ritz value; empty unless requested
    Vector residual_norms;  // |beta_m * s_{m,i}| estimates
    std::size_t operator_dim = 0;
    std::size_t iterations = 0;  // requested n_L
    std::size_t steps = 0;       // steps actually taken (< n_L on breakdown)
    Matrix lanczos_basis;  // steps x dim, only kept when vectors are requested

    bool has_vectors() const { return !ritz_vectors.empty(); }
    double lambda_max() const { return ritz_values.front(); }
    std::span<const double> vector(std::size_t i) const { return ritz_vectors.row(i); }
};

// Lanczos three-term recurrence from a seeded random unit start vector, with
// optional full re-orthogonalization after every step. Terminates early when
// beta <= 1e-12 * max|alpha| (invariant subspace found).
SpectrumEstimate lanczos(const LinearOperator& apply, std::size_t dim, const LanczosConfig& cfg,
                         bool want_vectors);

LinearOperator hessian_operator(const NetworkSpec& spec, std::span<const double> theta, const Batch& batch);
LinearOperator reduced_hessian_operator(const NetworkSpec& spec, std::span<const double> theta,
                                        const Batch& batch, const ReducedParamView& view);

// Column-by-column assembly from HVPs on basis vectors, symmetrized.
Matrix dense_hessian(const NetworkSpec& spec, std::span<const double> theta, const Batch& batch,
                     std::size_t cap = 2000);
Matrix dense_operator(const LinearOperator& apply, std::size_t dim, std::size_t cap = 2000);

// Eigen-checkpoint record persisted in the "HSPEC1" binary format.
struct EigenCheckpoint {
    std::int64_t epoch = 0;
    Vector ritz_values;
    std::vector<Vector> vectors;  // vectors[0] = v_max, then v_2 .. v_m

    const Vector& v_max() const { return vectors.front(); }
};

EigenCheckpoint make_checkpoint(std::int64_t epoch, const SpectrumEstimate& s, std::size_t n_vectors);

void write_checkpoints(std::ostream& os, const std::vector<EigenCheckpoint>& cps);
std::vector<EigenCheckpoint> read_checkpoints(std::istream& is);
void save_checkpoints(const std::string& path, const std::vector<EigenCheckpoint>& cps);
std::vector<EigenCheckpoint> load_checkpoints(const std::string& path);

}  // namespace hesslab
