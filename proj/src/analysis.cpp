#include "hesslab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>

#include "hesslab/errors.hpp"
#include "hesslab/parallel.hpp"

namespace hesslab {

std::string to_string(VectorKind k) { return k == VectorKind::v_max ? "vmax" : "gr"; }

std::string to_string(CheckpointPolicy p) { return p == CheckpointPolicy::early_stopped ? "early_stopped" : "final"; }

namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

// ---- similarity -----------------------------------------------------------

SimilarityMatrix similarity_matrix(const std::vector<EpochVector>& a, const std::vector<EpochVector>* b,
                                   VectorKind kind) {
    const auto& other = b ? *b : a;
    if (a.size() < 2 || other.size() < 2) throw InsufficientDataError("similarity_matrix: need >= 2 vectors per side");
    const std::size_t dim = a.front().values.size();
    for (const auto& v : a)
        if (v.values.size() != dim) throw IncompatibleError("similarity_matrix: vector dimensions differ");
    for (const auto& v : other)
        if (v.values.size() != dim) throw IncompatibleError("similarity_matrix: vector dimensions differ");

    SimilarityMatrix m;
    m.kind = kind;
    m.values = Matrix(a.size(), other.size());
    for (const auto& v : a) m.row_epochs.push_back(v.epoch);
    for (const auto& v : other) m.col_epochs.push_back(v.epoch);
    for (std::size_t i = 0; i < a.size(); ++i) {
        const std::size_t j0 = b ? 0 : i;
        for (std::size_t j = j0; j < other.size(); ++j) {
            const double s = (!b && i == j) ? 1.0 : std::abs(cosine_sim(a[i].values, other[j].values));
            m.values(i, j) = s;
            if (!b) m.values(j, i) = s;
        }
    }
    return m;
}

std::vector<EpochVector> vmax_series(const std::vector<EigenCheckpoint>& cps) {
    std::vector<EpochVector> out;
    for (const auto& cp : cps)
        if (!cp.vectors.empty()) out.push_back({cp.epoch, cp.v_max()});
    return out;
}

std::vector<EpochVector> gr_series(const std::vector<std::pair<long, Vector>>& gradients) {
    std::vector<EpochVector> out;
    for (std::size_t i = 0; i + 1 < gradients.size(); ++i) {
        if (gradients[i + 1].first != gradients[i].first + 1) continue;
        out.push_back({gradients[i].first, g_residual(gradients[i].second, gradients[i + 1].second)});
    }
    return out;
}

void write_similarity_csv(std::ostream& os, const SimilarityMatrix& m) {
    os << "epoch";
    for (long e : m.col_epochs) os << ',' << e;
    os << '\n';
    for (std::size_t i = 0; i < m.values.rows(); ++i) {
        os << m.row_epochs[i];
        for (std::size_t j = 0; j < m.values.cols(); ++j) os << ',' << num(m.values(i, j));
        os << '\n';
    }
}

// ---- correlation ----------------------------------------------------------

PolicyPoint policy_point(const std::vector<MetricRow>& rows, CheckpointPolicy policy) {
    if (rows.empty()) throw InsufficientDataError("policy_point: empty trajectory");
    std::size_t idx = rows.size() - 1;
    if (policy == CheckpointPolicy::early_stopped) {
        Vector val;
        for (const auto& r : rows) {
            if (!r.val_loss) throw InsufficientDataError("policy_point: validation loss missing");
            val.push_back(*r.val_loss);
        }
        idx = early_stop_epoch(val);
    }
    std::size_t spec_idx = idx;
    while (!rows[spec_idx].lambda_max && spec_idx > 0) --spec_idx;
    const MetricRow& s = rows[spec_idx];
    if (!s.lambda_max || !s.sane || !s.neff || !rows[idx].val_loss)
        throw InsufficientDataError("policy_point: no spectrum recorded at or before the policy epoch");
    return {*rows[idx].val_loss, *s.sane, *s.neff, *s.lambda_max, rows[idx].epoch};
}

namespace {

CorrelationCell correlate(const Vector& metric, const Vector& val) {
    CorrelationCell c;
    try {
        c.value = pearson(metric, val);
    } catch (const UndefinedCorrelationError& e) {
        c.flag = e.what();
    }
    return c;
}

}  // namespace

CorrelationTable correlation_table(const std::vector<ModelRecord>& models, CheckpointPolicy policy) {
    CorrelationTable table;
    table.policy = policy;
    Vector val, s, n, l;
    for (const auto& m : models) {
        if (m.diverged) {
            ++table.excluded_divergent;
            continue;
        }
        const PolicyPoint p = policy_point(m.rows, policy);
        val.push_back(p.val_loss);
        s.push_back(p.sane);
        n.push_back(p.neff);
        l.push_back(p.lambda_max);
    }
    table.population = val.size();
    if (table.population < 3)
        throw InsufficientDataError("correlation_table: " + std::to_string(table.population) +
                                    " non-divergent models, need at least 3");
    table.sane = correlate(s, val);
    table.neff = correlate(n, val);
    table.lambda_max = correlate(l, val);
    return table;
}

void write_correlation_csv(std::ostream& os, const std::vector<CorrelationTable>& tables) {
    os << "policy,sane,neff,lambda_max,population,excluded_divergent,flags\n";
    auto cell = [](const CorrelationCell& c) { return c.value ? num(*c.value) : std::string(); };
    for (const auto& t : tables) {
        std::string flags;
        for (const auto* c : {&t.sane, &t.neff, &t.lambda_max})
            if (!c->flag.empty()) flags += (flags.empty() ? "" : "; ") + c->flag;
        os << to_string(t.policy) << ',' << cell(t.sane) << ',' << cell(t.neff) << ',' << cell(t.lambda_max) << ','
           << t.population << ',' << t.excluded_divergent << ",\"" << flags << "\"\n";
    }
}

// ---- phases ---------------------------------------------------------------

std::vector<std::string> annotate_phases(const std::vector<MetricRow>& rows, const PhaseConfig& cfg) {
    std::vector<std::string> labels;
    labels.reserve(rows.size());
    double running_min = std::numeric_limits<double>::infinity();
    std::optional<double> lambda;
    bool after_peak = false;
    for (const auto& r : rows) {
        if (r.lambda_max) lambda = r.lambda_max;
        running_min = std::min(running_min, r.train_loss);
        const double edge = r.eta > 0.0 ? 2.0 / r.eta : std::numeric_limits<double>::infinity();
        const bool elevated = r.train_loss >= (1.0 + cfg.rho) * running_min;
        const bool above = lambda && *lambda > edge;
        const bool above_tol = lambda && *lambda > edge * (1.0 + cfg.tau);
        if (elevated && above) {
            labels.emplace_back("peak");
            after_peak = true;
        } else if (after_peak && (elevated || above_tol)) {
            labels.emplace_back("cooling");
        } else {
            labels.emplace_back("stable");
            after_peak = false;
        }
    }
    return labels;
}

std::size_t count_phase_cycles(const std::vector<std::string>& labels) {
    std::vector<std::string> runs;
    for (const auto& l : labels)
        if (runs.empty() || runs.back() != l) runs.push_back(l);
    std::size_t cycles = 0;
    for (std::size_t i = 0; i + 2 < runs.size(); ++i)
        if (runs[i] == "stable" && runs[i + 1] == "peak" && runs[i + 2] == "cooling") ++cycles;
    return cycles;
}

// ---- spectrum tracking ----------------------------------------------------

std::vector<SwapEvent> detect_swaps(const std::vector<long>& epochs, const std::vector<Vector>& lines) {
    std::vector<SwapEvent> events;
    if (lines.empty()) return events;
    if (epochs.size() != lines.size()) throw DimensionError("detect_swaps: epochs and lines differ in length");
    const std::size_t m = lines.front().size();
    for (const auto& l : lines)
        if (l.size() != m) throw DimensionError("detect_swaps: ragged line table");
    // Last strict order of each pair; ties keep the previous order.
    std::vector<int> order(m * m, 0);
    auto sgn = [](double d) { return (d > 0.0) - (d < 0.0); };
    for (std::size_t t = 0; t < lines.size(); ++t) {
        for (std::size_t a = 0; a < m; ++a)
            for (std::size_t b = a + 1; b < m; ++b) {
                const int s = sgn(lines[t][a] - lines[t][b]);
                if (s == 0) continue;
                int& prev = order[a * m + b];
                if (prev != 0 && prev != s) events.push_back({epochs[t], a, b});
                prev = s;
            }
    }
    return events;
}

SpectrumTrack spectrum_track(const std::vector<EigenCheckpoint>& cps, const MetricConfig& metrics) {
    SpectrumTrack track;
    track.neff_line = metrics.alpha;
    std::size_t m = std::numeric_limits<std::size_t>::max();
    for (const auto& cp : cps) m = std::min(m, cp.vectors.size());
    if (cps.empty()) m = 0;

    std::vector<Vector> line_vectors;  // latest vector of each eigen-line
    for (const auto& cp : cps) {
        track.epochs.push_back(cp.epoch);
        Vector ranked = cp.ritz_values;
        std::stable_sort(ranked.begin(), ranked.end(), std::greater<>());
        const double lambda_scale =
            metrics.scale_index <= ranked.size() ? ranked[metrics.scale_index - 1] : std::nan("");
        track.sane_line.push_back(metrics.alpha * lambda_scale);
        track.sigma_bulk.push_back(bulk_sigma_proxy(ranked).value);
        track.ranked.push_back(std::move(ranked));

        if (m == 0) continue;
        Vector tracked(m);
        if (line_vectors.empty()) {
            for (std::size_t j = 0; j < m; ++j) {
                line_vectors.push_back(cp.vectors[j]);
                tracked[j] = cp.ritz_values[j];
            }
        } else {
            // Greedy assignment by descending |cosine|.
            struct Pair {
                double s;
                std::size_t line, idx;
            };
            std::vector<Pair> pairs;
            for (std::size_t l = 0; l < m; ++l)
                for (std::size_t j = 0; j < m; ++j)
                    pairs.push_back({std::abs(cosine_sim(line_vectors[l], cp.vectors[j])), l, j});
            std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) { return x.s > y.s; });
            std::vector<bool> line_done(m, false), idx_done(m, false);
            for (const auto& p : pairs) {
                if (line_done[p.line] || idx_done[p.idx]) continue;
                line_done[p.line] = idx_done[p.idx] = true;
                tracked[p.line] = cp.ritz_values[p.idx];
                line_vectors[p.line] = cp.vectors[p.idx];
            }
        }
        track.tracked.push_back(std::move(tracked));
    }
    if (!track.tracked.empty()) track.swaps = detect_swaps(track.epochs, track.tracked);
    return track;
}

void write_spectrum_csv(std::ostream& os, const SpectrumTrack& track) {
    std::size_t n = 0;
    for (const auto& r : track.ranked) n = std::max(n, r.size());
    os << "epoch";
    for (std::size_t i = 0; i < n; ++i) os << ",lambda_" << (i + 1);
    os << ",sigma_bulk,sane_reg,neff_reg\n";
    for (std::size_t t = 0; t < track.epochs.size(); ++t) {
        os << track.epochs[t];
        for (std::size_t i = 0; i < n; ++i) {
            os << ',';
            if (i < track.ranked[t].size()) os << num(track.ranked[t][i]);
        }
        os << ',' << num(track.sigma_bulk[t]) << ',' << num(track.sane_line[t]) << ',' << num(track.neff_line) << '\n';
    }
}

void write_swaps_csv(std::ostream& os, const std::vector<SwapEvent>& swaps) {
    os << "epoch,line_a,line_b\n";
    for (const auto& s : swaps) os << s.epoch << ',' << (s.line_a + 1) << ',' << (s.line_b + 1) << '\n';
}

// ---- sweeps ---------------------------------------------------------------

ReductionSweep eta_reduction_sweep(const RunConfig& base, double eta1, const std::vector<long>& reduce_epochs,
                                   const Dataset& data, unsigned jobs) {
    const double eta0 = base.schedule.kind == Schedule::Kind::step_reduction ? base.schedule.eta0 : base.schedule.eta;
    ReductionSweep sweep;
    sweep.variants.resize(reduce_epochs.size());
    parallel_for(reduce_epochs.size(), jobs, [&](std::size_t i) {
        RunConfig cfg = base;
        cfg.schedule = Schedule::step(eta0, eta1, reduce_epochs[i], base.epochs);
        ReductionVariant& v = sweep.variants[i];
        v.reduce_epoch = reduce_epochs[i];
        v.trajectory = train(cfg, data);
        v.diverged = v.trajectory.diverged;
        if (!v.diverged && !v.trajectory.rows.empty()) {
            v.final_lambda_max = v.trajectory.rows.back().lambda_max;
            v.final_sane = v.trajectory.rows.back().sane;
        }
    });

    std::vector<EpochVector> finals;
    Vector epochs, lambdas;
    for (const auto& v : sweep.variants) {
        if (v.diverged || v.trajectory.checkpoints.empty() || !v.final_lambda_max) continue;
        finals.push_back({v.reduce_epoch, v.trajectory.checkpoints.back().v_max()});
        epochs.push_back(static_cast<double>(v.reduce_epoch));
        lambdas.push_back(*v.final_lambda_max);
    }
    if (finals.size() >= 2) sweep.final_vmax_similarity = similarity_matrix(finals, nullptr, VectorKind::v_max);
    if (epochs.size() >= 3) {
        try {
            sweep.spearman_trend = spearman(epochs, lambdas);
        } catch (const UndefinedCorrelationError&) {
        }
    }
    return sweep;
}

std::size_t knee_point(const std::vector<std::size_t>& sizes, const std::vector<double>& values, double threshold) {
    if (sizes.empty() || sizes.size() != values.size()) throw DimensionError("knee_point: size/value mismatch");
    for (std::size_t i = 1; i < sizes.size(); ++i) {
        const double prev = values[i - 1];
        const double rel = std::abs(values[i] - prev) / std::abs(prev);
        if (rel < threshold) return sizes[i - 1];
    }
    return sizes.back();
}

Vector output_change_profile(const NetworkSpec& spec, std::span<const double> theta,
                             std::span<const double> perturbed, const Matrix& inputs) {
    const Matrix base = forward(spec, theta, inputs);
    const Matrix moved = forward(spec, perturbed, inputs);
    Vector profile(inputs.rows(), 0.0);
    for (std::size_t r = 0; r < inputs.rows(); ++r)
        for (std::size_t c = 0; c < base.cols(); ++c) {
            const double d = moved(r, c) - base(r, c);
            profile[r] += d * d;
        }
    return profile;
}

double participation_ratio(std::span<const double> profile) {
    if (profile.empty()) throw InsufficientDataError("participation_ratio: empty profile");
    double sum = 0.0, sum_sq = 0.0;
    for (double c : profile) {
        sum += c;
        sum_sq += c * c;
    }
    if (sum_sq == 0.0) throw DegenerateVectorError("participation_ratio: zero profile");
    return sum * sum / (static_cast<double>(profile.size()) * sum_sq);
}

Batch sample_batch(const Batch& src, std::size_t b, Rng rng) {
    const std::size_t n = src.size();
    if (b < 1 || b > n) throw DimensionError("sample_batch: batch size outside [1, dataset size]");
    if (b == n) return src;
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < b; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
    idx.resize(b);
    std::sort(idx.begin(), idx.end());
    Batch out;
    out.inputs = Matrix(b, src.inputs.cols());
    if (src.is_classification()) out.labels.resize(b);
    if (!src.targets.empty()) out.targets = Matrix(b, src.targets.cols());
    for (std::size_t r = 0; r < b; ++r) {
        std::copy_n(src.inputs.row(idx[r]).begin(), src.inputs.cols(), out.inputs.row(r).begin());
        if (src.is_classification()) out.labels[r] = src.labels[idx[r]];
        if (!src.targets.empty()) std::copy_n(src.targets.row(idx[r]).begin(), src.targets.cols(), out.targets.row(r).begin());
    }
    return out;
}

BatchSharpnessResult batch_sharpness_sweep(const Dataset& data, const NetworkSpec& spec,
                                           const std::vector<std::size_t>& batch_sizes, const Rng& rng,
                                           const LanczosConfig& lanczos_cfg, std::uint64_t init_seed) {
    Rng init_rng = Rng(init_seed).split(1);
    const ParamVector theta = init_params(spec, init_rng);
    BatchSharpnessResult res;
    for (std::size_t i = 0; i < batch_sizes.size(); ++i) {
        const std::uint64_t seed = rng.split(i).next_u64();
        const Batch batch = sample_batch(data.train, batch_sizes[i], Rng(seed));
        const SpectrumEstimate s = lanczos(hessian_operator(spec, theta, batch), spec.param_count(), lanczos_cfg, false);
        res.batch_sizes.push_back(batch_sizes[i]);
        res.lambda_max.push_back(s.lambda_max());
        res.batch_seeds.push_back(seed);
    }
    res.recommended = knee_point(res.batch_sizes, res.lambda_max);
    return res;
}

}  // namespace hesslab
