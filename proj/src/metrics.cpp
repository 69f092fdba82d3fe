#include "hesslab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hesslab/errors.hpp"

namespace hesslab {

void MetricConfig::validate() const {
    if (!(alpha > 0.0)) throw ConfigError("metric alpha must be positive");
    if (scale_index < 1) throw ConfigError("metric scale_index is 1-based");
}

Vector effective_terms(std::span<const double> ritz_values, double shift) {
    Vector terms(ritz_values.size());
    for (std::size_t i = 0; i < ritz_values.size(); ++i) {
        const double den = ritz_values[i] + shift;
        if (den == 0.0)
            throw PoleError("effective-parameter term " + std::to_string(i) + " has a zero denominator", i);
        terms[i] = ritz_values[i] / den;
    }
    return terms;
}

double neff(std::span<const double> ritz_values, double alpha) {
    if (!(alpha > 0.0)) throw ConfigError("neff: alpha must be positive");
    const Vector terms = effective_terms(ritz_values, alpha);
    return std::accumulate(terms.begin(), terms.end(), 0.0);
}

double sane(std::span<const double> ritz_values, const MetricConfig& cfg) {
    cfg.validate();
    if (cfg.scale_index > ritz_values.size())
        throw DegenerateScaleError("sane: scale index " + std::to_string(cfg.scale_index) + " exceeds the " +
                                   std::to_string(ritz_values.size()) + " available Ritz values");
    const double lambda_scale = ritz_values[cfg.scale_index - 1];
    if (!(lambda_scale > 0.0))
        throw DegenerateScaleError("sane: lambda_scale = " + std::to_string(lambda_scale) + " is not positive");
    const Vector terms = effective_terms(ritz_values, cfg.alpha * lambda_scale);
    return std::accumulate(terms.begin(), terms.end(), 0.0);
}

BulkSigma bulk_sigma_proxy(std::span<const double> ritz_values) {
    if (ritz_values.empty()) return {};
    const double lo = *std::min_element(ritz_values.begin(), ritz_values.end());
    if (lo < 0.0) return {-lo, true};
    return {0.0, false};
}

double misalignment(std::span<const double> u_t, std::span<const double> u_next) {
    return std::abs(1.0 - cosine_sim(u_t, u_next));
}

Vector g_residual(std::span<const double> g_t, std::span<const double> g_next) {
    if (g_t.size() != g_next.size()) throw DimensionError("g_residual: length mismatch");
    Vector out(g_t.size());
    for (std::size_t i = 0; i < g_t.size(); ++i) out[i] = 0.5 * (g_t[i] + g_next[i]);
    return out;
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw DimensionError("pearson: series lengths differ");
    if (x.size() < 2) throw InsufficientDataError("pearson: need at least two points");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw UndefinedCorrelationError("pearson: constant series");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

namespace {

Vector average_ranks(std::span<const double> x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    Vector ranks(x.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j);
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw DimensionError("spearman: series lengths differ");
    const Vector rx = average_ranks(x);
    const Vector ry = average_ranks(y);
    return pearson(rx, ry);
}

std::size_t early_stop_epoch(std::span<const double> val_losses) {
    if (val_losses.empty()) throw InsufficientDataError("early_stop_epoch: empty series");
    std::size_t i = val_losses.size() - 1;
    while (i > 0 && !(val_losses[i - 1] > val_losses[i])) --i;
    return i;
}

std::vector<std::optional<double>> vmax_misalignment_series(const std::vector<std::optional<Vector>>& checkpoints) {
    std::vector<std::optional<double>> out(checkpoints.size());
    for (std::size_t i = 1; i < checkpoints.size(); ++i) {
        if (!checkpoints[i - 1] || !checkpoints[i]) continue;
        out[i] = std::abs(1.0 - std::abs(cosine_sim(*checkpoints[i - 1], *checkpoints[i])));
    }
    return out;
}

}  // namespace hesslab
