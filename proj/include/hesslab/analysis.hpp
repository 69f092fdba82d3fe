#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hesslab/linalg.hpp"
#include "hesslab/metrics.hpp"
#include "hesslab/spectral.hpp"
#include "hesslab/trainer.hpp"

namespace hesslab {

enum class VectorKind { v_max, g_r };
std::string to_string(VectorKind k);

// A vector tagged with the epoch it was taken at.
struct EpochVector {
    long epoch = 0;
    Vector values;
};

struct SimilarityMatrix {
    Matrix values;  // |S_c| entries
    std::vector<long> row_epochs;
    std::vector<long> col_epochs;
    VectorKind kind = VectorKind::v_max;
};

// Entry (i, j) = |S_c(a_i, b_j)|. Pass b = nullptr for the within-trajectory matrix.
SimilarityMatrix similarity_matrix(const std::vector<EpochVector>& a, const std::vector<EpochVector>* b,
                                   VectorKind kind);

// v_max of every checkpoint.
std::vector<EpochVector> vmax_series(const std::vector<EigenCheckpoint>& cps);
// g_r = 1/2 (g_t + g_{t+1}) over consecutive stored gradients, tagged with t.
std::vector<EpochVector> gr_series(const std::vector<std::pair<long, Vector>>& gradients);

void write_similarity_csv(std::ostream& os, const SimilarityMatrix& m);

enum class CheckpointPolicy { early_stopped, final };
std::string to_string(CheckpointPolicy p);

struct CorrelationCell {
    std::optional<double> value;
    std::string flag;  // non-empty when the correlation is undefined
};

struct CorrelationTable {
    CheckpointPolicy policy = CheckpointPolicy::final;
    CorrelationCell sane;
    CorrelationCell neff;
    CorrelationCell lambda_max;
    std::size_t population = 0;
    std::size_t excluded_divergent = 0;
};

// One model of a population: its metric rows and whether it diverged.
struct ModelRecord {
    std::string name;
    std::vector<MetricRow> rows;
    bool diverged = false;
};

// Metric values and validation loss of one model at the policy epoch. When the
// spectrum was not computed at that epoch the latest earlier spectrum row is used.
struct PolicyPoint {
    double val_loss = 0.0;
    double sane = 0.0;
    double neff = 0.0;
    double lambda_max = 0.0;
    long epoch = 0;
};
PolicyPoint policy_point(const std::vector<MetricRow>& rows, CheckpointPolicy policy);

CorrelationTable correlation_table(const std::vector<ModelRecord>& models, CheckpointPolicy policy);
void write_correlation_csv(std::ostream& os, const std::vector<CorrelationTable>& tables);

struct PhaseConfig {
    double tau = 0.05;  // tolerance on the 2/eta threshold
    double rho = 0.10;  // relative loss elevation
};

// Labels each epoch stable | peak | cooling from lambda_max, eta and training
// loss. Missing lambda_max values carry the last observed value forward.
std::vector<std::string> annotate_phases(const std::vector<MetricRow>& rows, const PhaseConfig& cfg = {});

// Counts stable -> peak -> cooling cycles in a label sequence.
std::size_t count_phase_cycles(const std::vector<std::string>& labels);

struct SwapEvent {
    long epoch = 0;  // epoch at which the new order is first observed
    std::size_t line_a = 0;
    std::size_t line_b = 0;
};

// Pairs of tracked lines whose relative order flips between consecutive epochs.
// lines[t][j] is the value of line j at step t.
std::vector<SwapEvent> detect_swaps(const std::vector<long>& epochs, const std::vector<Vector>& lines);

struct SpectrumTrack {
    std::vector<long> epochs;
    std::vector<Vector> ranked;    // ranked[t] = Ritz values, descending
    std::vector<Vector> tracked;   // tracked[t][j] = value of eigen-line j (vector-matched)
    std::vector<SwapEvent> swaps;
    std::vector<double> sane_line;  // alpha * lambda_scale per epoch
    double neff_line = 0.0;         // alpha
    std::vector<double> sigma_bulk;  // |lambda^-_max| per epoch
};

// Ranks the Ritz values of each checkpoint and, for the eigenvectors stored in
// the checkpoints, follows each eigen-line across epochs by maximal |cosine|
// matching so that reorderings surface as swap events.
SpectrumTrack spectrum_track(const std::vector<EigenCheckpoint>& cps, const MetricConfig& metrics);
void write_spectrum_csv(std::ostream& os, const SpectrumTrack& track);
void write_swaps_csv(std::ostream& os, const std::vector<SwapEvent>& swaps);

struct ReductionVariant {
    long reduce_epoch = 0;
    Trajectory trajectory;
    std::optional<double> final_lambda_max;
    std::optional<double> final_sane;
    bool diverged = false;
};

struct ReductionSweep {
    std::vector<ReductionVariant> variants;
    SimilarityMatrix final_vmax_similarity;  // over non-divergent variants
    std::optional<double> spearman_trend;      // final lambda_max vs reduce epoch
};

// One run per reduction epoch with schedule step(eta0, eta1, r, epochs).
// `base.schedule` supplies eta0/eta1 (a constant schedule is read as eta0 = eta).
ReductionSweep eta_reduction_sweep(const RunConfig& base, double eta1, const std::vector<long>& reduce_epochs,
                                   const Dataset& data, unsigned jobs = 1);

struct BatchSharpnessResult {
    std::vector<std::size_t> batch_sizes;
    std::vector<double> lambda_max;
    std::vector<std::uint64_t> batch_seeds;
    std::size_t recommended = 0;
};

// First b_{i-1} such that |lambda(b_i) - lambda(b_{i-1})| / |lambda(b_{i-1})| < threshold,
// or the last size when no such step exists.
std::size_t knee_point(const std::vector<std::size_t>& sizes, const std::vector<double>& values,
                       double threshold = 0.05);

// lambda_max at the initial parameters for batches of each size sampled from
// data.train (the whole set, in order, when b equals its size).
BatchSharpnessResult batch_sharpness_sweep(const Dataset& data, const NetworkSpec& spec,
                                           const std::vector<std::size_t>& batch_sizes, const Rng& rng,
                                           const LanczosConfig& lanczos, std::uint64_t init_seed);

// Per-point squared L2 change of network outputs between two parameter vectors.
Vector output_change_profile(const NetworkSpec& spec, std::span<const double> theta,
                             std::span<const double> perturbed, const Matrix& inputs);

// (sum c)^2 / (N sum c^2): 1 for a uniform profile, 1/N for a single spike.
double participation_ratio(std::span<const double> profile);

// Samples b rows without replacement (or the full batch in order when b == size).
Batch sample_batch(const Batch& src, std::size_t b, Rng rng);

}  // namespace hesslab
