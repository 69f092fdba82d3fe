#include "hesslab/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hesslab/binio.hpp"
#include "hesslab/errors.hpp"

namespace hesslab {

Schedule Schedule::constant_rate(double eta) {
    Schedule s;
    s.kind = Kind::constant;
    s.eta = eta;
    return s;
}

Schedule Schedule::step(double eta0, double eta1, long start, long end) {
    Schedule s;
    s.kind = Kind::step_reduction;
    s.eta0 = eta0;
    s.eta1 = eta1;
    s.reduce_start = start;
    s.reduce_end = end;
    return s;
}

Schedule Schedule::cyclic_rate(double eta_plus, double eta_minus, long d_plus, long d_minus, long tail) {
    Schedule s;
    s.kind = Kind::cyclic;
    s.eta_plus = eta_plus;
    s.eta_minus = eta_minus;
    s.d_plus = d_plus;
    s.d_minus = d_minus;
    s.tail = tail;
    return s;
}

void Schedule::validate() const {
    switch (kind) {
        case Kind::constant:
            if (!(eta >= 0.0)) throw ConfigError("schedule: eta must be non-negative");
            break;
        case Kind::step_reduction:
            if (!(eta0 >= 0.0) || !(eta1 >= 0.0)) throw ConfigError("schedule: eta0/eta1 must be non-negative");
            if (reduce_start < 0) throw ConfigError("schedule: reduce_start must be non-negative");
            break;
        case Kind::cyclic:
            if (!(eta_plus >= 0.0) || !(eta_minus >= 0.0)) throw ConfigError("schedule: cyclic rates must be non-negative");
            if (d_plus < 1 || d_minus < 1) throw ConfigError("schedule: cyclic durations must be >= 1");
            if (tail < 0) throw ConfigError("schedule: tail must be non-negative");
            break;
    }
}

std::string to_string(Schedule::Kind k) {
    switch (k) {
        case Schedule::Kind::constant: return "constant";
        case Schedule::Kind::step_reduction: return "step_reduction";
        case Schedule::Kind::cyclic: return "cyclic";
    }
    return "constant";
}

double lr_at_epoch(const Schedule& s, long epoch) {
    switch (s.kind) {
        case Schedule::Kind::constant: return s.eta;
        case Schedule::Kind::step_reduction: return epoch < s.reduce_start ? s.eta0 : s.eta1;
        case Schedule::Kind::cyclic: {
            if (s.horizon > 0 && epoch >= s.horizon - s.tail) return s.eta_minus;
            const long pos = epoch % (s.d_plus + s.d_minus);
            return pos < s.d_plus ? s.eta_plus : s.eta_minus;
        }
    }
    return s.eta;
}

long compensated_epochs(double eta, long base, double eta_b) {
    if (!(eta > 0.0)) throw ConfigError("compensated_epochs: eta must be positive");
    if (eta <= eta_b) return std::lround(static_cast<double>(base) * eta_b / eta);
    return base;
}

Dataset build_dataset(const DatasetConfig& cfg) {
    if (cfg.kind == "wreg") return gen_wreg(cfg.n_train, cfg.n_val, cfg.noise_sd, Rng(cfg.seed));
    if (cfg.kind == "src") return gen_src(cfg.src, Rng(cfg.seed));
    if (cfg.kind == "idx") return load_fmnist_subset(cfg.images_path, cfg.labels_path, cfg.subset);
    if (cfg.kind == "cache") return load_dataset(cfg.cache_path);
    throw ConfigError("unknown dataset kind '" + cfg.kind + "'");
}

void RunConfig::validate() const {
    network.validate();
    schedule.validate();
    metrics.validate();
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (spectrum_every < 1) throw ConfigError("spectrum_every must be >= 1");
    if (lanczos.iterations < 1) throw ConfigError("lanczos iterations must be >= 1");
    if (hessian_layers > network.depth()) throw ConfigError("hessian_layers exceeds network depth");
    if (!(divergence_threshold > 0.0)) throw ConfigError("divergence_threshold must be positive");
}

SpectrumEstimate spectrum_at(const NetworkSpec& spec, std::span<const double> theta, const Batch& batch,
                             const LanczosConfig& cfg, std::size_t layers, bool want_vectors) {
    if (layers == 0) return lanczos(hessian_operator(spec, theta, batch), spec.param_count(), cfg, want_vectors);
    const ReducedParamView view = make_view(spec, layers);
    return lanczos(reduced_hessian_operator(spec, theta, batch, view), view.size(), cfg, want_vectors);
}

std::uint64_t lanczos_seed_for(std::uint64_t run_seed, long epoch) {
    return Rng(run_seed, 0x53504543ULL).split(static_cast<std::uint64_t>(epoch)).next_u64();
}

namespace {

struct Diverged {
    std::string cause;
};

}  // namespace

Trajectory train(const RunConfig& cfg, const Dataset& data) {
    cfg.validate();
    const NetworkSpec& spec = cfg.network;
    Schedule schedule = cfg.schedule;
    if (schedule.kind == Schedule::Kind::cyclic && schedule.horizon == 0) schedule.horizon = cfg.epochs;

    Rng root(cfg.seed);
    Rng init_rng = root.split(1);
    ParamVector theta = init_params(spec, init_rng);

    Trajectory traj;
    std::optional<double> initial_loss;
    Vector prev_grad;

    for (long t = 0; t < cfg.epochs; ++t) {
        const double eta = lr_at_epoch(schedule, t);
        MetricRow row;
        row.epoch = t;
        row.eta = eta;
        LossGrad lg;
        try {
            lg = loss_and_grad(spec, theta, data.train);
            if (!initial_loss) initial_loss = lg.loss;
            if (lg.loss > cfg.divergence_threshold * std::max(*initial_loss, 1e-300))
                throw Diverged{"training loss " + std::to_string(lg.loss) + " exceeds " +
                               std::to_string(cfg.divergence_threshold) + " x initial loss"};
            row.train_loss = lg.loss;
            row.val_loss = loss(spec, theta, data.val);
            row.grad_norm = norm(lg.grad);
            if (!prev_grad.empty() && norm(prev_grad) > 0.0 && row.grad_norm > 0.0)
                row.grad_misalign = misalignment(prev_grad, lg.grad);

            if (t % cfg.spectrum_every == 0 || t + 1 == cfg.epochs) {
                LanczosConfig lc = cfg.lanczos;
                lc.seed = lanczos_seed_for(cfg.seed, t);
                const SpectrumEstimate s = spectrum_at(spec, theta, data.train, lc, cfg.hessian_layers, true);
                row.lambda_max = s.lambda_max();
                const BulkSigma bulk = bulk_sigma_proxy(s.ritz_values);
                row.lambda_neg_max = bulk.has_negative_tail ? -bulk.value : 0.0;
                try {
                    row.neff = neff(s.ritz_values, cfg.metrics.alpha);
                } catch (const PoleError& e) {
                    throw PoleError(std::string(e.what()) + " at epoch " + std::to_string(t), e.index());
                }
                try {
                    row.sane = sane(s.ritz_values, cfg.metrics);
                } catch (const DegenerateScaleError& e) {
                    row.sane = row.neff;
                    traj.notes.push_back("epoch " + std::to_string(t) + ": " + e.what() + "; SANE fell back to N_eff");
                }
                traj.checkpoints.push_back(make_checkpoint(t, s, cfg.checkpoint_vectors));
                const auto& cps = traj.checkpoints;
                if (cps.size() >= 2)
                    row.vmax_misalign = std::abs(1.0 - std::abs(cosine_sim(cps[cps.size() - 2].v_max(), cps.back().v_max())));
            }
        } catch (const Diverged& d) {
            traj.diverged = true;
            traj.diverged_epoch = t;
            traj.divergence_cause = d.cause;
            break;
        } catch (const NumericError& e) {
            traj.diverged = true;
            traj.diverged_epoch = t;
            traj.divergence_cause = e.what();
            break;
        }

        if (cfg.keep_gradients) traj.gradients.emplace_back(t, lg.grad);
        traj.rows.push_back(row);
        axpy(-eta, lg.grad, theta);
        prev_grad = std::move(lg.grad);
    }

    traj.final_theta = std::move(theta);
    if (!traj.rows.empty()) {
        Vector val;
        for (const auto& r : traj.rows) val.push_back(*r.val_loss);
        traj.early_stop = early_stop_epoch(val);
    }
    return traj;
}

Trajectory train(const RunConfig& cfg) { return train(cfg, build_dataset(cfg.dataset)); }

std::pair<ParamVector, ParamVector> perturb_along(std::span<const double> theta, const SpectrumEstimate& spectrum,
                                                  std::size_t i, double c_p) {
    if (!(c_p > 0.0)) throw ConfigError("perturb_along: c_p must be positive");
    if (!spectrum.has_vectors() || i >= spectrum.ritz_vectors.rows())
        throw CheckpointMissingError("perturb_along: Ritz vector " + std::to_string(i + 1) + " not materialized");
    const auto v = spectrum.vector(i);
    if (v.size() != theta.size()) throw DimensionError("perturb_along: vector length mismatch");
    const double p = std::sqrt(std::abs(spectrum.ritz_values[i])) * c_p;
    ParamVector plus(theta.begin(), theta.end());
    ParamVector minus(theta.begin(), theta.end());
    axpy(p, v, plus);
    axpy(-p, v, minus);
    return {std::move(plus), std::move(minus)};
}

std::pair<ParamVector, ParamVector> perturb_along(std::span<const double> theta, const EigenCheckpoint& cp,
                                                  std::size_t i, double c_p) {
    if (!(c_p > 0.0)) throw ConfigError("perturb_along: c_p must be positive");
    if (i >= cp.vectors.size() || i >= cp.ritz_values.size())
        throw CheckpointMissingError("perturb_along: checkpoint has no Ritz vector " + std::to_string(i + 1));
    const Vector& v = cp.vectors[i];
    if (v.size() != theta.size()) throw DimensionError("perturb_along: vector length mismatch");
    const double p = std::sqrt(std::abs(cp.ritz_values[i])) * c_p;
    ParamVector plus(theta.begin(), theta.end());
    ParamVector minus(theta.begin(), theta.end());
    axpy(p, v, plus);
    axpy(-p, v, minus);
    return {std::move(plus), std::move(minus)};
}

// ---- CSV ------------------------------------------------------------------

const char* const kTrajectoryHeader =
    "epoch,eta,train_loss,val_loss,lambda_max,lambda_neg_max,sane,neff,grad_norm,grad_misalign,vmax_misalign,phase";

namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string opt(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

std::optional<double> parse_opt(const std::string& s) {
    if (s.empty()) return std::nullopt;
    return std::stod(s);
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace

void write_trajectory_csv(std::ostream& os, const std::vector<MetricRow>& rows) {
    os << kTrajectoryHeader << '\n';
    for (const auto& r : rows) {
        os << r.epoch << ',' << num(r.eta) << ',' << num(r.train_loss) << ',' << opt(r.val_loss) << ','
           << opt(r.lambda_max) << ',' << opt(r.lambda_neg_max) << ',' << opt(r.sane) << ',' << opt(r.neff) << ','
           << num(r.grad_norm) << ',' << opt(r.grad_misalign) << ',' << opt(r.vmax_misalign) << ',' << r.phase
           << '\n';
    }
}

std::vector<MetricRow> read_trajectory_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != kTrajectoryHeader)
        throw ParseError("trajectory CSV header does not match the expected columns", 0);
    std::vector<MetricRow> rows;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cells = split_csv(line);
        if (cells.size() != 12) throw ParseError("trajectory CSV line " + std::to_string(lineno) + " has wrong arity", 0);
        MetricRow r;
        r.epoch = std::stol(cells[0]);
        r.eta = std::stod(cells[1]);
        r.train_loss = std::stod(cells[2]);
        r.val_loss = parse_opt(cells[3]);
        r.lambda_max = parse_opt(cells[4]);
        r.lambda_neg_max = parse_opt(cells[5]);
        r.sane = parse_opt(cells[6]);
        r.neff = parse_opt(cells[7]);
        r.grad_norm = std::stod(cells[8]);
        r.grad_misalign = parse_opt(cells[9]);
        r.vmax_misalign = parse_opt(cells[10]);
        r.phase = cells[11];
        rows.push_back(std::move(r));
    }
    return rows;
}

void save_trajectory_csv(const std::string& path, const std::vector<MetricRow>& rows) {
    std::ofstream os(path);
    if (!os) throw Error("cannot open " + path + " for writing");
    write_trajectory_csv(os, rows);
}

std::vector<MetricRow> load_trajectory_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open " + path);
    return read_trajectory_csv(is);
}

namespace {
constexpr std::string_view kParamMagic = "HPARAM1";
}

void save_params(const std::string& path, const NetworkSpec& spec, std::span<const double> theta) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open " + path + " for writing");
    binio::put_magic(os, kParamMagic);
    binio::put_u64(os, spec.digest());
    binio::put_u64(os, theta.size());
    binio::put_f64s(os, theta);
}

ParamVector load_params(const std::string& path, const NetworkSpec& spec) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open " + path);
    binio::expect_magic(is, kParamMagic);
    if (binio::get_u64(is) != spec.digest())
        throw IncompatibleError("parameter dump " + path + " was written for a different architecture");
    ParamVector theta(binio::get_count(is));
    for (double& x : theta) x = binio::get_f64(is);
    if (theta.size() != spec.param_count()) throw DimensionError("parameter dump length mismatch");
    return theta;
}

}  // namespace hesslab
