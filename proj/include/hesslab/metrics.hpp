#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hesslab/linalg.hpp"

namespace hesslab {

struct MetricConfig {
    double alpha = 1.0;
    std::size_t scale_index = 2;  // 1-based: lambda_scale = lambda_{scale_index}

    void validate() const;
};

// One per-epoch record of a trajectory. Optional fields are left empty on
// epochs where the quantity is undefined or was not computed.
struct MetricRow {
    long epoch = 0;
    double eta = 0.0;
    double train_loss = 0.0;
    std::optional<double> val_loss;
    std::optional<double> lambda_max;
    std::optional<double> lambda_neg_max;
    std::optional<double> sane;
    std::optional<double> neff;
    double grad_norm = 0.0;
    std::optional<double> grad_misalign;
    std::optional<double> vmax_misalign;
    std::string phase;
};

// Sum of lambda_i / (lambda_i + alpha) over every Ritz value.
double neff(std::span<const double> ritz_values, double alpha);

// Sum of lambda_i / (lambda_i + alpha * lambda_scale).
double sane(std::span<const double> ritz_values, const MetricConfig& cfg);

// Per-term breakdown of either sum, for auditing negative-eigenvalue terms.
Vector effective_terms(std::span<const double> ritz_values, double denominator_shift);

struct BulkSigma {
    double value = 0.0;
    bool has_negative_tail = false;
};
// |min lambda| when the minimum is negative; 0 with the flag cleared otherwise.
BulkSigma bulk_sigma_proxy(std::span<const double> ritz_values);

// |1 - S_c(u_t, u_next)| with the signed cosine (gradients).
double misalignment(std::span<const double> u_t, std::span<const double> u_next);

// 1/2 (g_t + g_next)
Vector g_residual(std::span<const double> g_t, std::span<const double> g_next);

double pearson(std::span<const double> x, std::span<const double> y);
// Pearson on average ranks (ties share the mean rank).
double spearman(std::span<const double> x, std::span<const double> y);

// Walks the validation series backward from the last epoch and stops at the
// first epoch whose predecessor has a larger loss.
std::size_t early_stop_epoch(std::span<const double> val_losses);

// |1 - |S_c(v_t, v_next)||: eigenvector sign is arbitrary. A missing
// checkpoint on either side yields an empty entry. Entry i compares i-1 and i;
// entry 0 is always empty.
std::vector<std::optional<double>> vmax_misalignment_series(const std::vector<std::optional<Vector>>& checkpoints);

}  // namespace hesslab
