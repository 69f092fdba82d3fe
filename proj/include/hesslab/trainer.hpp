#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hesslab/data.hpp"
#include "hesslab/metrics.hpp"
#include "hesslab/nn.hpp"
#include "hesslab/spectral.hpp"

namespace hesslab {

struct Schedule {
    enum class Kind { constant, step_reduction, cyclic };
    Kind kind = Kind::constant;

    double eta = 0.05;  // constant

    double eta0 = 0.05;  // step_reduction
    double eta1 = 0.01;
    long reduce_start = 0;
    long reduce_end = 0;  // provenance only: the switch is hard at reduce_start

    double eta_plus = 0.20;  // cyclic
    double eta_minus = 0.05;
    long d_plus = 10;
    long d_minus = 50;
    long tail = 40;
    long horizon = 0;  // total epochs; when > 0 the last `tail` epochs use eta_minus

    static Schedule constant_rate(double eta);
    static Schedule step(double eta0, double eta1, long start, long end);
    static Schedule cyclic_rate(double eta_plus, double eta_minus, long d_plus = 10, long d_minus = 50,
                                long tail = 40);

    void validate() const;
};

std::string to_string(Schedule::Kind k);

double lr_at_epoch(const Schedule& schedule, long epoch);

// round(base * eta_b / eta) for eta <= eta_b, else base.
long compensated_epochs(double eta, long base = 360, double eta_b = 0.05);

struct DatasetConfig {
    std::string kind = "wreg";  // wreg | src | idx | cache
    std::uint64_t seed = 0;
    // wreg
    std::size_t n_train = 128;
    std::size_t n_val = 128;
    double noise_sd = 0.05;
    // src
    SrcParams src;
    // idx / cache
    std::string images_path;
    std::string labels_path;
    std::string cache_path;
    SubsetOptions subset;
};

Dataset build_dataset(const DatasetConfig& cfg);

struct RunConfig {
    DatasetConfig dataset;
    NetworkSpec network;
    Schedule schedule;
    long epochs = 360;
    std::uint64_t seed = 0;
    LanczosConfig lanczos;
    MetricConfig metrics;
    long spectrum_every = 1;          // m: spectrum + eigen-checkpoint cadence
    std::size_t checkpoint_vectors = 1;  // Ritz vectors kept per checkpoint (v_max first)
    std::size_t hessian_layers = 0;   // k for the reduced Hessian; 0 = full
    bool keep_gradients = false;      // store g_t for g_r similarity studies
    double divergence_threshold = 1e6;  // x initial training loss

    void validate() const;
};

struct Trajectory {
    std::vector<MetricRow> rows;
    std::vector<EigenCheckpoint> checkpoints;
    std::vector<std::pair<long, Vector>> gradients;
    ParamVector final_theta;
    std::size_t early_stop = 0;
    bool diverged = false;
    long diverged_epoch = -1;
    std::string divergence_cause;
    std::vector<std::string> notes;  // e.g. SANE fallbacks
};

// Spectrum of the full Hessian (layers == 0) or of the reduced Hessian over
// the `layers` layers closest to the output.
SpectrumEstimate spectrum_at(const NetworkSpec& spec, std::span<const double> theta, const Batch& batch,
                             const LanczosConfig& cfg, std::size_t layers, bool want_vectors);

// Seed used for the Lanczos start vector at a given epoch of a run.
std::uint64_t lanczos_seed_for(std::uint64_t run_seed, long epoch);

// Full-batch gradient descent; divergence truncates the run instead of throwing.
Trajectory train(const RunConfig& cfg, const Dataset& data);
Trajectory train(const RunConfig& cfg);

// theta +/- sqrt(|lambda_i|) * c_p * v_i, i zero-based.
std::pair<ParamVector, ParamVector> perturb_along(std::span<const double> theta, const SpectrumEstimate& spectrum,
                                                  std::size_t i, double c_p);
std::pair<ParamVector, ParamVector> perturb_along(std::span<const double> theta, const EigenCheckpoint& cp,
                                                  std::size_t i, double c_p);

// Trajectory CSV with the fixed column order
// epoch,eta,train_loss,val_loss,lambda_max,lambda_neg_max,sane,neff,grad_norm,grad_misalign,vmax_misalign,phase
extern const char* const kTrajectoryHeader;
void write_trajectory_csv(std::ostream& os, const std::vector<MetricRow>& rows);
std::vector<MetricRow> read_trajectory_csv(std::istream& is);
void save_trajectory_csv(const std::string& path, const std::vector<MetricRow>& rows);
std::vector<MetricRow> load_trajectory_csv(const std::string& path);

// Parameter dump: "HPARAM1", spec digest, length, values.
void save_params(const std::string& path, const NetworkSpec& spec, std::span<const double> theta);
ParamVector load_params(const std::string& path, const NetworkSpec& spec);

}  // namespace hesslab
