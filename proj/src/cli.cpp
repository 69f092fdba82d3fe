#include "hesslab/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>

#include <CLI11.hpp>
#include <json.hpp>

#include "hesslab/analysis.hpp"
#include "hesslab/binio.hpp"
#include "hesslab/config.hpp"
#include "hesslab/digest.hpp"
#include "hesslab/errors.hpp"
#include "hesslab/parallel.hpp"

namespace hesslab::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kGradMagic = "HGRAD1";

const json kConventions = {
    {"grad_misalign", "|1 - S_c(g_t, g_t+1)| with the signed cosine"},
    {"vmax_misalign", "|1 - |S_c(v_t, v_t+1)|| with the absolute cosine (eigenvector sign is arbitrary)"},
    {"lambda_neg_max", "minimum Ritz value when negative, else 0 (see has_negative_tail per checkpoint)"},
    {"sums", "SANE and N_eff sum unweighted over all Ritz values"}};

// Thrown for divergence of a mandatory single run.
struct DivergedRun {
    std::string message;
};

void write_json(const fs::path& path, const json& doc) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path.string());
    os << doc.dump(2) << '\n';
}

json read_json(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read " + path.string());
    try {
        return json::parse(is);
    } catch (const json::parse_error& e) {
        throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

fs::path prepare_run_dir(const fs::path& out, const std::string& id, bool force) {
    const fs::path dir = out / id;
    if (fs::exists(dir)) {
        if (!force) throw ConfigError("run directory " + dir.string() + " already exists (use --force to overwrite)");
        fs::remove_all(dir);
    }
    fs::create_directories(dir);
    return dir;
}

void save_gradients(const fs::path& path, const std::vector<std::pair<long, Vector>>& grads) {
    std::ofstream os(path, std::ios::binary);
    binio::put_magic(os, kGradMagic);
    binio::put_u64(os, grads.size());
    for (const auto& [epoch, g] : grads) {
        binio::put_i64(os, epoch);
        binio::put_u64(os, g.size());
        binio::put_f64s(os, g);
    }
}

std::vector<std::pair<long, Vector>> load_gradients(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("run has no stored gradients (" + path.string() + "); set keep_gradients");
    binio::expect_magic(is, kGradMagic);
    std::vector<std::pair<long, Vector>> out(binio::get_count(is));
    for (auto& [epoch, g] : out) {
        epoch = binio::get_i64(is);
        g.resize(binio::get_count(is));
        for (double& x : g) x = binio::get_f64(is);
    }
    return out;
}

// Writes every artifact of one trajectory into `dir`.
json write_run(const fs::path& dir, const ExperimentConfig& cfg, const Trajectory& traj, const Dataset& data) {
    write_json(dir / "config.resolved.json", to_json(cfg));
    save_trajectory_csv((dir / "trajectory.csv").string(), traj.rows);
    save_checkpoints((dir / "eigen.hspec").string(), traj.checkpoints);
    save_params((dir / "params.bin").string(), cfg.run.network, traj.final_theta);
    json files = {"config.resolved.json", "trajectory.csv", "eigen.hspec", "params.bin"};
    if (cfg.run.keep_gradients) {
        save_gradients(dir / "gradients.bin", traj.gradients);
        files.push_back("gradients.bin");
    }
    json manifest = {{"format_version", kFormatVersion},
                     {"run_id", run_id(cfg)},
                     {"config_digest", config_digest(cfg)},
                     {"seed", cfg.run.seed},
                     {"spec_digest", to_hex(cfg.run.network.digest())},
                     {"param_count", cfg.run.network.param_count()},
                     {"dataset_provenance", data.provenance},
                     {"dataset_digest", to_hex(dataset_digest(data))},
                     {"epochs_requested", cfg.run.epochs},
                     {"epochs_completed", traj.rows.size()},
                     {"diverged", traj.diverged},
                     {"diverged_epoch", traj.diverged ? json(traj.diverged_epoch) : json(nullptr)},
                     {"divergence_cause", traj.divergence_cause},
                     {"early_stop_epoch", traj.rows.empty() ? json(nullptr) : json(traj.rows[traj.early_stop].epoch)},
                     {"lanczos_iterations", cfg.run.lanczos.iterations},
                     {"alpha", cfg.run.metrics.alpha},
                     {"scale_index", cfg.run.metrics.scale_index},
                     {"hessian_layers", cfg.run.hessian_layers},
                     {"notes", traj.notes},
                     {"conventions", kConventions},
                     {"files", files}};
    write_json(dir / "manifest.json", manifest);
    return manifest;
}

struct LoadedRun {
    fs::path dir;
    ExperimentConfig cfg;
    json manifest;
};

LoadedRun load_run(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw ConfigError("run directory " + dir.string() + " does not exist");
    LoadedRun r;
    r.dir = dir;
    r.cfg = parse_config(read_json(dir / "config.resolved.json"));
    r.manifest = read_json(dir / "manifest.json");
    if (r.manifest.value("format_version", 0) != kFormatVersion)
        throw ConfigError(dir.string() + ": unsupported manifest format_version");
    return r;
}

// Run directories below `root`: root itself when it holds a manifest, else its
// immediate subdirectories that do, in name order.
std::vector<fs::path> find_runs(const fs::path& root) {
    if (fs::exists(root / "manifest.json") && fs::exists(root / "trajectory.csv")) return {root};
    if (!fs::is_directory(root)) throw ConfigError("runs path " + root.string() + " does not exist");
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory() && fs::exists(e.path() / "manifest.json") && fs::exists(e.path() / "trajectory.csv"))
            out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

void apply_seed_override(ExperimentConfig& cfg, const std::optional<std::uint64_t>& seed) {
    if (seed) cfg.run.seed = *seed;
}

// ---- subcommands ----------------------------------------------------------

int cmd_train(const std::string& config, const fs::path& out, std::optional<std::uint64_t> seed, bool force) {
    ExperimentConfig cfg = load_config(config);
    apply_seed_override(cfg, seed);
    const Dataset data = build_dataset(cfg.run.dataset);
    const fs::path dir = prepare_run_dir(out, run_id(cfg), force);
    const Trajectory traj = train(cfg.run, data);
    write_run(dir, cfg, traj, data);
    std::cout << dir.string() << '\n';
    if (traj.diverged) throw DivergedRun{"run diverged at epoch " + std::to_string(traj.diverged_epoch) + ": " + traj.divergence_cause};
    return kExitOk;
}

std::vector<CorrelationTable> correlations_for(const std::vector<fs::path>& runs, std::vector<std::string>& messages) {
    std::vector<ModelRecord> models;
    for (const auto& dir : runs) {
        ModelRecord m;
        m.name = dir.filename().string();
        m.rows = load_trajectory_csv((dir / "trajectory.csv").string());
        m.diverged = read_json(dir / "manifest.json").value("diverged", false);
        models.push_back(std::move(m));
    }
    std::vector<CorrelationTable> tables;
    for (auto policy : {CheckpointPolicy::early_stopped, CheckpointPolicy::final}) {
        try {
            tables.push_back(correlation_table(models, policy));
        } catch (const InsufficientDataError& e) {
            messages.push_back(to_string(policy) + ": " + e.what());
        }
    }
    return tables;
}

int cmd_sweep(const std::string& config, const fs::path& out, unsigned jobs, std::optional<std::uint64_t> seed,
              bool force) {
    const json raw = read_json(config);
    ExperimentConfig base = load_config(config);
    if (base.sweep_etas.empty()) throw ConfigError("/sweep/etas: a sweep needs at least one learning rate");
    if (base.sweep_seeds.empty()) base.sweep_seeds = {0, 1, 2, 3, 4};
    if (seed)
        for (auto& s : base.sweep_seeds) s += *seed;
    const Dataset data = build_dataset(base.run.dataset);
    const fs::path root = prepare_run_dir(out, "sweep-" + config_digest(base), force);
    write_json(root / "sweep_config.json", raw);

    struct Member {
        ExperimentConfig cfg;
        json manifest;
        double eta = 0.0;
    };
    std::vector<Member> members;
    for (double eta : base.sweep_etas)
        for (auto s : base.sweep_seeds) {
            Member m;
            m.cfg = base;
            m.cfg.sweep_etas.clear();
            m.cfg.sweep_seeds.clear();
            m.cfg.run.seed = s;
            m.cfg.run.schedule = Schedule::constant_rate(eta);
            if (base.compensate_epochs)
                m.cfg.run.epochs = compensated_epochs(eta, base.compensation_base, base.compensation_eta_b);
            m.eta = eta;
            members.push_back(std::move(m));
        }
    std::mutex log_mutex;
    parallel_for(members.size(), jobs, [&](std::size_t i) {
        Member& m = members[i];
        const fs::path dir = root / run_id(m.cfg);
        fs::create_directories(dir);
        const Trajectory traj = train(m.cfg.run, data);
        m.manifest = write_run(dir, m.cfg, traj, data);
        std::lock_guard lock(log_mutex);
        std::cerr << "[" << (i + 1) << "/" << members.size() << "] eta=" << m.eta << " seed=" << m.cfg.run.seed
                  << (traj.diverged ? " diverged" : "") << '\n';
    });

    json list = json::array();
    std::size_t diverged = 0;
    for (const auto& m : members) {
        const bool d = m.manifest.value("diverged", false);
        diverged += d ? 1 : 0;
        list.push_back({{"run_id", m.manifest["run_id"]}, {"eta", m.eta}, {"seed", m.cfg.run.seed},
                        {"epochs", m.cfg.run.epochs}, {"diverged", d}});
    }
    std::vector<std::string> messages;
    const auto tables = correlations_for(find_runs(root), messages);
    if (!tables.empty()) {
        std::ofstream os(root / "correlation.csv");
        write_correlation_csv(os, tables);
    }
    write_json(root / "sweep_manifest.json", {{"format_version", kFormatVersion},
                                              {"total_models", members.size()},
                                              {"divergent_models", diverged},
                                              {"members", list},
                                              {"correlation_messages", messages}});
    std::cout << root.string() << '\n';
    return kExitOk;
}

int cmd_correlation(const std::vector<std::string>& run_roots, const fs::path& out) {
    std::vector<fs::path> runs;
    for (const auto& r : run_roots) {
        auto found = find_runs(r);
        runs.insert(runs.end(), found.begin(), found.end());
    }
    if (runs.empty()) throw ConfigError("no run directories found under the given --runs paths");
    std::vector<std::string> messages;
    const auto tables = correlations_for(runs, messages);
    for (const auto& m : messages) std::cerr << m << '\n';
    if (tables.empty()) throw InsufficientDataError("no correlation table could be computed");
    fs::create_directories(out);
    std::ofstream os(out / "correlation.csv");
    write_correlation_csv(os, tables);
    write_correlation_csv(std::cout, tables);
    return kExitOk;
}

std::vector<EpochVector> vectors_of(const LoadedRun& run, VectorKind kind) {
    if (kind == VectorKind::v_max) return vmax_series(load_checkpoints((run.dir / "eigen.hspec").string()));
    return gr_series(load_gradients(run.dir / "gradients.bin"));
}

int cmd_similarity(const fs::path& a_dir, const std::optional<fs::path>& b_dir, const std::string& kind_name,
                   const fs::path& out) {
    VectorKind kind;
    if (kind_name == "vmax")
        kind = VectorKind::v_max;
    else if (kind_name == "gr")
        kind = VectorKind::g_r;
    else
        throw ConfigError("--kind must be vmax or gr, got '" + kind_name + "'");
    const LoadedRun a = load_run(a_dir);
    const auto va = vectors_of(a, kind);
    SimilarityMatrix m;
    if (b_dir) {
        const LoadedRun b = load_run(*b_dir);
        if (a.manifest.value("spec_digest", "") != b.manifest.value("spec_digest", ""))
            throw IncompatibleError("runs " + a_dir.string() + " and " + b_dir->string() +
                                    " use different architectures; cross similarity is undefined");
        const auto vb = vectors_of(b, kind);
        m = similarity_matrix(va, &vb, kind);
    } else {
        m = similarity_matrix(va, nullptr, kind);
    }
    fs::create_directories(out);
    const fs::path file = out / ("similarity_" + to_string(kind) + ".csv");
    std::ofstream os(file);
    write_similarity_csv(os, m);
    std::cout << file.string() << '\n';
    return kExitOk;
}

Matrix evaluation_grid(const Batch& train, std::size_t grid) {
    const std::size_t d = train.inputs.cols();
    if (d == 1) {
        Matrix g(grid, 1);
        for (std::size_t i = 0; i < grid; ++i) g(i, 0) = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(grid - 1);
        return g;
    }
    if (d == 2) {
        double lo[2] = {1e300, 1e300}, hi[2] = {-1e300, -1e300};
        for (std::size_t r = 0; r < train.size(); ++r)
            for (int c = 0; c < 2; ++c) {
                lo[c] = std::min(lo[c], train.inputs(r, c));
                hi[c] = std::max(hi[c], train.inputs(r, c));
            }
        Matrix g(grid * grid, 2);
        for (std::size_t i = 0; i < grid; ++i)
            for (std::size_t j = 0; j < grid; ++j) {
                g(i * grid + j, 0) = lo[0] + (hi[0] - lo[0]) * static_cast<double>(i) / static_cast<double>(grid - 1);
                g(i * grid + j, 1) = lo[1] + (hi[1] - lo[1]) * static_cast<double>(j) / static_cast<double>(grid - 1);
            }
        return g;
    }
    return train.inputs;
}

int cmd_perturb(const fs::path& run_dir, const fs::path& out, double c_p, std::size_t top, std::size_t layers,
                std::size_t grid) {
    if (!(c_p > 0.0)) throw ConfigError("--c-p must be positive");
    if (grid < 2) throw ConfigError("--grid must be at least 2");
    const LoadedRun run = load_run(run_dir);
    const RunConfig& rc = run.cfg.run;
    const Dataset data = build_dataset(rc.dataset);
    const ParamVector theta = load_params((run.dir / "params.bin").string(), rc.network);
    LanczosConfig lc = rc.lanczos;
    lc.seed = lanczos_seed_for(rc.seed, rc.epochs);
    SpectrumEstimate s = spectrum_at(rc.network, theta, data.train, lc, layers, true);
    if (top > s.ritz_values.size()) throw ConfigError("--top exceeds the number of Ritz pairs");
    if (layers > 0) {
        // Embed reduced-view vectors into the full parameter space.
        const ReducedParamView view = make_view(rc.network, layers);
        Matrix full(s.ritz_vectors.rows(), rc.network.param_count());
        for (std::size_t i = 0; i < full.rows(); ++i)
            std::copy_n(s.ritz_vectors.row(i).begin(), view.size(), full.row(i).begin() + static_cast<std::ptrdiff_t>(view.begin));
        s.ritz_vectors = std::move(full);
    }

    const Matrix points = evaluation_grid(data.train, grid);
    const Matrix base = forward(rc.network, theta, points);
    std::vector<Matrix> plus, minus;
    json dirs = json::array();
    const double base_loss = loss(rc.network, theta, data.train);
    for (std::size_t i = 0; i < top; ++i) {
        auto [tp, tm] = perturb_along(theta, s, i, c_p);
        plus.push_back(forward(rc.network, tp, points));
        minus.push_back(forward(rc.network, tm, points));
        const Vector profile = output_change_profile(rc.network, theta, tp, points);
        json entry = {{"index", i + 1},
                      {"lambda", s.ritz_values[i]},
                      {"p", std::sqrt(std::abs(s.ritz_values[i])) * c_p},
                      {"loss_base", base_loss},
                      {"loss_plus", loss(rc.network, tp, data.train)},
                      {"loss_minus", loss(rc.network, tm, data.train)}};
        try {
            entry["participation_ratio"] = participation_ratio(profile);
        } catch (const Error&) {
            entry["participation_ratio"] = nullptr;
        }
        dirs.push_back(entry);
    }

    fs::create_directories(out);
    std::ofstream os(out / "perturbation.csv");
    const std::size_t d = points.cols(), c = base.cols();
    for (std::size_t k = 0; k < d; ++k) os << (k ? "," : "") << "x" << k;
    for (std::size_t k = 0; k < c; ++k) os << ",base_" << k;
    for (std::size_t i = 0; i < top; ++i)
        for (const char* side : {"plus", "minus"})
            for (std::size_t k = 0; k < c; ++k) os << ',' << side << (i + 1) << '_' << k;
    os << '\n';
    os.precision(17);
    for (std::size_t r = 0; r < points.rows(); ++r) {
        for (std::size_t k = 0; k < d; ++k) os << (k ? "," : "") << points(r, k);
        for (std::size_t k = 0; k < c; ++k) os << ',' << base(r, k);
        for (std::size_t i = 0; i < top; ++i) {
            for (std::size_t k = 0; k < c; ++k) os << ',' << plus[i](r, k);
            for (std::size_t k = 0; k < c; ++k) os << ',' << minus[i](r, k);
        }
        os << '\n';
    }
    write_json(out / "perturbation.json", {{"format_version", kFormatVersion},
                                           {"run", run.dir.string()},
                                           {"c_p", c_p},
                                           {"hessian_layers", layers},
                                           {"directions", dirs}});
    std::cout << (out / "perturbation.csv").string() << '\n';
    return kExitOk;
}

int cmd_phases(const fs::path& run_dir, std::optional<double> tau, std::optional<double> rho) {
    const LoadedRun run = load_run(run_dir);
    PhaseConfig pc = run.cfg.phases;
    if (tau) pc.tau = *tau;
    if (rho) pc.rho = *rho;
    const fs::path csv = run.dir / "trajectory.csv";
    auto rows = load_trajectory_csv(csv.string());
    const auto labels = annotate_phases(rows, pc);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i].phase = labels[i];
    save_trajectory_csv(csv.string(), rows);
    std::cout << "cycles " << count_phase_cycles(labels) << '\n';
    return kExitOk;
}

int cmd_spectrum(const fs::path& run_dir, const fs::path& out) {
    const LoadedRun run = load_run(run_dir);
    const auto cps = load_checkpoints((run.dir / "eigen.hspec").string());
    const SpectrumTrack track = spectrum_track(cps, run.cfg.run.metrics);
    fs::create_directories(out);
    {
        std::ofstream os(out / "spectrum.csv");
        write_spectrum_csv(os, track);
    }
    std::ofstream os(out / "swaps.csv");
    write_swaps_csv(os, track.swaps);
    std::cout << "swap events " << track.swaps.size() << '\n';
    return kExitOk;
}

int cmd_batch_sweep(const std::string& config, const fs::path& out, std::optional<std::uint64_t> seed, bool force) {
    ExperimentConfig cfg = load_config(config);
    apply_seed_override(cfg, seed);
    if (cfg.batch_sizes.empty()) throw ConfigError("/batch_sweep/sizes: need at least one batch size");
    const Dataset data = build_dataset(cfg.run.dataset);
    for (std::size_t b : cfg.batch_sizes)
        if (b < 1 || b > data.train.size())
            throw ConfigError("/batch_sweep/sizes: batch size " + std::to_string(b) + " outside [1, " +
                              std::to_string(data.train.size()) + "]");
    const fs::path dir = prepare_run_dir(out, run_id(cfg), force);
    LanczosConfig lc = cfg.run.lanczos;
    lc.seed = lanczos_seed_for(cfg.run.seed, 0);
    const auto res = batch_sharpness_sweep(data, cfg.run.network, cfg.batch_sizes, Rng(cfg.batch_seed), lc, cfg.run.seed);
    write_json(dir / "config.resolved.json", to_json(cfg));
    write_json(dir / "batch_sweep.json", {{"format_version", kFormatVersion},
                                          {"batch_sizes", res.batch_sizes},
                                          {"lambda_max", res.lambda_max},
                                          {"batch_seeds", res.batch_seeds},
                                          {"recommended_batch_size", res.recommended}});
    std::cout << "recommended b = " << res.recommended << '\n';
    return kExitOk;
}

int cmd_eta_reduction(const std::string& config, const fs::path& out, unsigned jobs, std::optional<std::uint64_t> seed,
                      bool force) {
    ExperimentConfig cfg = load_config(config);
    apply_seed_override(cfg, seed);
    if (cfg.reduction_epochs.empty()) throw ConfigError("/reduction/reduce_epochs: need at least one epoch");
    const Dataset data = build_dataset(cfg.run.dataset);
    const fs::path dir = prepare_run_dir(out, run_id(cfg), force);
    write_json(dir / "config.resolved.json", to_json(cfg));
    const ReductionSweep sweep = eta_reduction_sweep(cfg.run, cfg.reduction_eta1, cfg.reduction_epochs, data, jobs);
    json variants = json::array();
    for (const auto& v : sweep.variants) {
        ExperimentConfig vc = cfg;
        vc.reduction_epochs.clear();
        const double eta0 = cfg.run.schedule.kind == Schedule::Kind::step_reduction ? cfg.run.schedule.eta0 : cfg.run.schedule.eta;
        vc.run.schedule = Schedule::step(eta0, cfg.reduction_eta1, v.reduce_epoch, cfg.run.epochs);
        const fs::path vdir = dir / ("reduce-" + std::to_string(v.reduce_epoch));
        fs::create_directories(vdir);
        write_run(vdir, vc, v.trajectory, data);
        variants.push_back({{"reduce_epoch", v.reduce_epoch},
                            {"final_lambda_max", v.final_lambda_max ? json(*v.final_lambda_max) : json(nullptr)},
                            {"final_sane", v.final_sane ? json(*v.final_sane) : json(nullptr)},
                            {"diverged", v.diverged}});
    }
    if (!sweep.final_vmax_similarity.values.empty()) {
        std::ofstream os(dir / "final_vmax_similarity.csv");
        write_similarity_csv(os, sweep.final_vmax_similarity);
    }
    write_json(dir / "eta_reduction_sweep.json",
               {{"format_version", kFormatVersion},
                {"eta1", cfg.reduction_eta1},
                {"variants", variants},
                {"spearman_final_lambda_vs_reduce_epoch",
                 sweep.spearman_trend ? json(*sweep.spearman_trend) : json(nullptr)}});
    std::cout << dir.string() << '\n';
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"Hessian-spectrum laboratory for full-batch gradient descent"};
    app.require_subcommand(1);

    std::string config;
    std::string out = "runs";
    unsigned jobs = 1;
    std::optional<std::uint64_t> seed;
    bool force = false;

    auto add_common = [&](CLI::App* sub, bool with_config) {
        if (with_config) sub->add_option("--config", config, "JSON config file")->required();
        sub->add_option("--out", out, "Output directory");
        sub->add_option("--seed", seed, "Override the config seed");
        sub->add_flag("--force", force, "Overwrite an existing run directory");
    };

    auto* train_cmd = app.add_subcommand("train", "Train one trajectory");
    add_common(train_cmd, true);

    auto* sweep_cmd = app.add_subcommand("sweep", "Train a grid of learning rates x seeds");
    add_common(sweep_cmd, true);
    sweep_cmd->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

    std::vector<std::string> run_roots;
    auto* corr_cmd = app.add_subcommand("analyze-correlation", "Correlate metrics with validation loss");
    corr_cmd->add_option("--runs", run_roots, "Sweep or run directories")->required();
    corr_cmd->add_option("--out", out, "Output directory");

    std::string a_dir, b_dir, kind = "vmax";
    auto* sim_cmd = app.add_subcommand("similarity", "Similarity matrix of v_max or g_r vectors");
    sim_cmd->add_option("--a", a_dir, "Run directory")->required();
    sim_cmd->add_option("--b", b_dir, "Second run directory for cross-trajectory similarity");
    sim_cmd->add_option("--kind", kind, "vmax or gr");
    sim_cmd->add_option("--out", out, "Output directory");

    std::string run_dir;
    double c_p = 0.1;
    std::size_t top = 3, layers = 0, grid = 201;
    auto* perturb_cmd = app.add_subcommand("perturb", "Perturb final weights along top Ritz vectors");
    perturb_cmd->add_option("--run", run_dir, "Run directory")->required();
    perturb_cmd->add_option("--out", out, "Output directory");
    perturb_cmd->add_option("--c-p", c_p, "Perturbation scale c_p");
    perturb_cmd->add_option("--top", top, "Number of eigen-directions");
    perturb_cmd->add_option("--layers", layers, "Reduced Hessian depth k (0 = full)");
    perturb_cmd->add_option("--grid", grid, "Evaluation grid resolution");

    std::optional<double> tau, rho;
    auto* phases_cmd = app.add_subcommand("phases", "Annotate stable/peak/cooling phases");
    phases_cmd->add_option("--run", run_dir, "Run directory")->required();
    phases_cmd->add_option("--tau", tau, "Threshold tolerance");
    phases_cmd->add_option("--rho", rho, "Relative loss elevation");

    auto* spectrum_cmd = app.add_subcommand("spectrum", "Ranked spectrum table and swap events");
    spectrum_cmd->add_option("--run", run_dir, "Run directory")->required();
    spectrum_cmd->add_option("--out", out, "Output directory");

    auto* batch_cmd = app.add_subcommand("batch-sweep", "lambda_max at initialisation per batch size");
    add_common(batch_cmd, true);

    auto* red_cmd = app.add_subcommand("eta-reduction-sweep", "Learning-rate reduction at several epochs");
    add_common(red_cmd, true);
    red_cmd->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp& e) {
        std::cout << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    }

    try {
        if (*train_cmd) return cmd_train(config, out, seed, force);
        if (*sweep_cmd) return cmd_sweep(config, out, jobs, seed, force);
        if (*corr_cmd) return cmd_correlation(run_roots, out);
        if (*sim_cmd) return cmd_similarity(a_dir, b_dir.empty() ? std::nullopt : std::optional<fs::path>(b_dir), kind, out);
        if (*perturb_cmd) return cmd_perturb(run_dir, out, c_p, top, layers, grid);
        if (*phases_cmd) return cmd_phases(run_dir, tau, rho);
        if (*spectrum_cmd) return cmd_spectrum(run_dir, out);
        if (*batch_cmd) return cmd_batch_sweep(config, out, seed, force);
        if (*red_cmd) return cmd_eta_reduction(config, out, jobs, seed, force);
    } catch (const DivergedRun& d) {
        std::cerr << "error: " << d.message << '\n';
        return kExitDiverged;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    }
    return kExitConfig;
}

}  // namespace hesslab::cli
