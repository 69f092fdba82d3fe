#include "hesslab/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "hesslab/digest.hpp"
#include "hesslab/errors.hpp"

namespace hesslab {

using nlohmann::json;

namespace {

// Reads fields of one JSON object, tracking its pointer path and rejecting
// unknown keys once all reads are done.
class ObjectReader {
public:
    ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) fail(path_, "expected an object");
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return obj_.contains(key) && !obj_.at(key).is_null();
    }

    std::string at(const std::string& key) const { return path_ + "/" + key; }

    double number(const std::string& key, double def) {
        if (!has(key)) return def;
        const json& v = obj_.at(key);
        if (!v.is_number()) fail(at(key), "expected a number");
        return v.get<double>();
    }

    std::int64_t integer(const std::string& key, std::int64_t def) {
        if (!has(key)) return def;
        const json& v = obj_.at(key);
        if (!v.is_number_integer()) fail(at(key), "expected an integer");
        return v.get<std::int64_t>();
    }

    std::uint64_t unsigned_int(const std::string& key, std::uint64_t def) {
        if (!has(key)) return def;
        const json& v = obj_.at(key);
        if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
            fail(at(key), "expected a non-negative integer");
        return v.get<std::uint64_t>();
    }

    bool boolean(const std::string& key, bool def) {
        if (!has(key)) return def;
        const json& v = obj_.at(key);
        if (!v.is_boolean()) fail(at(key), "expected true or false");
        return v.get<bool>();
    }

    std::string string(const std::string& key, const std::string& def) {
        if (!has(key)) return def;
        const json& v = obj_.at(key);
        if (!v.is_string()) fail(at(key), "expected a string");
        return v.get<std::string>();
    }

    const json* object(const std::string& key) {
        if (!has(key)) return nullptr;
        return &obj_.at(key);
    }

    template <class T>
    std::vector<T> array(const std::string& key) {
        std::vector<T> out;
        if (!has(key)) return out;
        const json& v = obj_.at(key);
        if (!v.is_array()) fail(at(key), "expected an array");
        for (std::size_t i = 0; i < v.size(); ++i) {
            const json& e = v[i];
            if constexpr (std::is_floating_point_v<T>) {
                if (!e.is_number()) fail(at(key) + "/" + std::to_string(i), "expected a number");
            } else {
                if (!e.is_number_integer()) fail(at(key) + "/" + std::to_string(i), "expected an integer");
                if constexpr (std::is_unsigned_v<T>)
                    if (!e.is_number_unsigned() && e.get<std::int64_t>() < 0)
                        fail(at(key) + "/" + std::to_string(i), "expected a non-negative integer");
            }
            out.push_back(e.get<T>());
        }
        return out;
    }

    void finish() const {
        for (auto it = obj_.begin(); it != obj_.end(); ++it)
            if (!seen_.count(it.key())) fail(at(it.key()), "unknown field");
    }

    [[noreturn]] static void fail(const std::string& path, const std::string& msg) {
        throw ConfigError((path.empty() ? std::string("/") : path) + ": " + msg);
    }

private:
    const json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

NetworkSpec parse_network(const json& j, const std::string& path) {
    ObjectReader r(j, path);
    const LossKind loss = [&] {
        try {
            return loss_from_string(r.string("loss", "cross_entropy_softmax"));
        } catch (const ConfigError& e) {
            ObjectReader::fail(r.at("loss"), e.what());
        }
    }();
    NetworkSpec spec;
    if (const json* layers = r.object("layers")) {
        if (!layers->is_array() || layers->empty()) ObjectReader::fail(r.at("layers"), "expected a non-empty array");
        spec.loss = loss;
        for (std::size_t i = 0; i < layers->size(); ++i) {
            ObjectReader lr((*layers)[i], r.at("layers") + "/" + std::to_string(i));
            Layer l;
            l.fan_in = lr.unsigned_int("fan_in", 0);
            l.fan_out = lr.unsigned_int("fan_out", 0);
            try {
                l.activation = activation_from_string(lr.string("activation", "relu"));
            } catch (const ConfigError& e) {
                ObjectReader::fail(lr.at("activation"), e.what());
            }
            l.residual = lr.boolean("residual", false);
            lr.finish();
            spec.layers.push_back(l);
        }
    } else {
        const auto input = r.unsigned_int("input_dim", 1);
        const auto hidden = r.array<std::size_t>("hidden");
        const auto output = r.unsigned_int("output_dim", 1);
        const bool residual = r.boolean("residual", false);
        spec.loss = loss;
        std::size_t prev = input;
        for (std::size_t h : hidden) {
            spec.layers.push_back({prev, h, Activation::relu, residual && prev == h});
            prev = h;
        }
        spec.layers.push_back({prev, output, Activation::identity, false});
    }
    r.finish();
    try {
        spec.validate();
    } catch (const Error& e) {
        ObjectReader::fail(path, e.what());
    }
    return spec;
}

Schedule parse_schedule(const json& j, const std::string& path) {
    ObjectReader r(j, path);
    const std::string kind = r.string("kind", "constant");
    Schedule s;
    if (kind == "constant") {
        s = Schedule::constant_rate(r.number("eta", 0.05));
    } else if (kind == "step_reduction") {
        s = Schedule::step(r.number("eta0", 0.05), r.number("eta1", 0.01), r.integer("start", 0), r.integer("end", 0));
    } else if (kind == "cyclic") {
        s = Schedule::cyclic_rate(r.number("eta_plus", 0.20), r.number("eta_minus", 0.05), r.integer("d_plus", 10),
                                  r.integer("d_minus", 50), r.integer("tail", 40));
    } else {
        ObjectReader::fail(r.at("kind"), "unknown schedule kind '" + kind + "'");
    }
    r.finish();
    try {
        s.validate();
    } catch (const ConfigError& e) {
        ObjectReader::fail(path, e.what());
    }
    return s;
}

DatasetConfig parse_dataset(const json& j, const std::string& path) {
    ObjectReader r(j, path);
    DatasetConfig d;
    d.kind = r.string("kind", "wreg");
    d.seed = r.unsigned_int("seed", 0);
    d.n_train = r.unsigned_int("n_train", d.n_train);
    d.n_val = r.unsigned_int("n_val", d.n_val);
    d.noise_sd = r.number("noise_sd", d.noise_sd);
    if (const json* src = r.object("src")) {
        ObjectReader sr(*src, r.at("src"));
        d.src.n_per_class = sr.unsigned_int("n_per_class", d.src.n_per_class);
        d.src.n_val_per_class = sr.unsigned_int("n_val_per_class", d.src.n_val_per_class);
        d.src.turns = sr.number("turns", d.src.turns);
        d.src.noise_sd = sr.number("noise_sd", d.src.noise_sd);
        d.src.r0 = sr.number("r0", d.src.r0);
        d.src.growth = sr.number("b", d.src.growth);
        sr.finish();
    }
    d.images_path = r.string("images", "");
    d.labels_path = r.string("labels", "");
    d.cache_path = r.string("cache", "");
    if (const json* sub = r.object("subset")) {
        ObjectReader sr(*sub, r.at("subset"));
        if (sr.has("classes")) d.subset.classes = sr.array<std::size_t>("classes");
        d.subset.b_train = sr.unsigned_int("b_train", d.subset.b_train);
        d.subset.b_val = sr.unsigned_int("b_val", d.subset.b_val);
        d.subset.stratified = sr.boolean("stratified", false);
        if (sr.has("shuffle_seed")) d.subset.shuffle_seed = sr.unsigned_int("shuffle_seed", 0);
        sr.finish();
    }
    r.finish();
    if (d.kind != "wreg" && d.kind != "src" && d.kind != "idx" && d.kind != "cache")
        ObjectReader::fail(r.at("kind"), "unknown dataset kind '" + d.kind + "'");
    if (d.kind == "idx" && (d.images_path.empty() || d.labels_path.empty()))
        ObjectReader::fail(path, "idx datasets need both 'images' and 'labels'");
    if (d.kind == "cache" && d.cache_path.empty()) ObjectReader::fail(r.at("cache"), "cache datasets need a path");
    if (!d.images_path.empty()) d.images_path = resolve_data_path(d.images_path);
    if (!d.labels_path.empty()) d.labels_path = resolve_data_path(d.labels_path);
    if (!d.cache_path.empty()) d.cache_path = resolve_data_path(d.cache_path);
    return d;
}

json schedule_json(const Schedule& s) {
    switch (s.kind) {
        case Schedule::Kind::constant: return {{"kind", "constant"}, {"eta", s.eta}};
        case Schedule::Kind::step_reduction:
            return {{"kind", "step_reduction"}, {"eta0", s.eta0}, {"eta1", s.eta1}, {"start", s.reduce_start}, {"end", s.reduce_end}};
        case Schedule::Kind::cyclic:
            return {{"kind", "cyclic"}, {"eta_plus", s.eta_plus}, {"eta_minus", s.eta_minus},
                    {"d_plus", s.d_plus}, {"d_minus", s.d_minus}, {"tail", s.tail}};
    }
    return {};
}

double nominal_eta(const Schedule& s) {
    switch (s.kind) {
        case Schedule::Kind::constant: return s.eta;
        case Schedule::Kind::step_reduction: return s.eta0;
        case Schedule::Kind::cyclic: return s.eta_minus;
    }
    return s.eta;
}

}  // namespace

std::string resolve_data_path(const std::string& path) {
    namespace fs = std::filesystem;
    if (path.empty() || fs::path(path).is_absolute() || fs::exists(path)) return path;
    if (const char* root = std::getenv("HESSLAB_DATA_DIR")) {
        const fs::path candidate = fs::path(root) / path;
        if (fs::exists(candidate)) return candidate.string();
    }
    return path;
}

ExperimentConfig parse_config(const json& doc) {
    ObjectReader r(doc, "");
    ExperimentConfig cfg;
    RunConfig& run = cfg.run;
    const auto version = r.integer("format_version", kFormatVersion);
    if (version != kFormatVersion)
        ObjectReader::fail(r.at("format_version"), "unsupported format_version " + std::to_string(version));
    run.seed = r.unsigned_int("seed", 0);
    run.epochs = r.integer("epochs", 360);
    if (const json* d = r.object("dataset")) run.dataset = parse_dataset(*d, "/dataset");
    if (const json* n = r.object("network"))
        run.network = parse_network(*n, "/network");
    else
        run.network = NetworkSpec::mlp(1, {32, 32, 32, 32}, 1, LossKind::mse_onehot);
    if (const json* s = r.object("schedule")) run.schedule = parse_schedule(*s, "/schedule");
    if (const json* l = r.object("lanczos")) {
        ObjectReader lr(*l, "/lanczos");
        run.lanczos.iterations = lr.unsigned_int("iterations", 100);
        run.lanczos.reorthogonalize = lr.boolean("reorthogonalize", true);
        lr.finish();
    }
    if (const json* m = r.object("metrics")) {
        ObjectReader mr(*m, "/metrics");
        run.metrics.alpha = mr.number("alpha", 1.0);
        run.metrics.scale_index = mr.unsigned_int("scale_index", 2);
        mr.finish();
    }
    run.spectrum_every = r.integer("spectrum_every", 1);
    run.checkpoint_vectors = r.unsigned_int("checkpoint_vectors", 1);
    run.hessian_layers = r.unsigned_int("hessian_layers", 0);
    run.keep_gradients = r.boolean("keep_gradients", false);
    run.divergence_threshold = r.number("divergence_threshold", 1e6);

    if (const json* p = r.object("phases")) {
        ObjectReader pr(*p, "/phases");
        cfg.phases.tau = pr.number("tau", 0.05);
        cfg.phases.rho = pr.number("rho", 0.10);
        pr.finish();
    }
    if (const json* c = r.object("epoch_compensation")) {
        ObjectReader cr(*c, "/epoch_compensation");
        cfg.compensate_epochs = cr.boolean("enabled", true);
        cfg.compensation_base = cr.integer("base", 360);
        cfg.compensation_eta_b = cr.number("eta_b", 0.05);
        cr.finish();
    }
    if (const json* s = r.object("sweep")) {
        ObjectReader sr(*s, "/sweep");
        cfg.sweep_etas = sr.array<double>("etas");
        cfg.sweep_seeds = sr.array<std::uint64_t>("seeds");
        if (sr.has("n_seeds")) {
            if (!cfg.sweep_seeds.empty()) ObjectReader::fail(sr.at("n_seeds"), "give either seeds or n_seeds");
            const auto n = sr.unsigned_int("n_seeds", 5);
            for (std::uint64_t i = 0; i < n; ++i) cfg.sweep_seeds.push_back(i);
        }
        sr.finish();
        for (double eta : cfg.sweep_etas)
            if (!(eta > 0.0)) ObjectReader::fail("/sweep/etas", "learning rates must be positive");
    }
    if (const json* s = r.object("reduction")) {
        ObjectReader sr(*s, "/reduction");
        cfg.reduction_eta1 = sr.number("eta1", 0.02);
        cfg.reduction_epochs = sr.array<long>("reduce_epochs");
        sr.finish();
    }
    if (const json* s = r.object("batch_sweep")) {
        ObjectReader sr(*s, "/batch_sweep");
        cfg.batch_sizes = sr.array<std::size_t>("sizes");
        cfg.batch_seed = sr.unsigned_int("seed", 0);
        sr.finish();
    }
    r.finish();

    if (cfg.compensate_epochs)
        run.epochs = compensated_epochs(nominal_eta(run.schedule), cfg.compensation_base, cfg.compensation_eta_b);
    try {
        run.validate();
    } catch (const ConfigError& e) {
        ObjectReader::fail("", e.what());
    } catch (const Error& e) {
        ObjectReader::fail("/network", e.what());
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read config file '" + path + "'");
    json doc;
    try {
        doc = json::parse(is);
    } catch (const json::parse_error& e) {
        throw ConfigError("malformed JSON in '" + path + "': " + e.what());
    }
    return parse_config(doc);
}

json to_json(const ExperimentConfig& cfg) {
    const RunConfig& run = cfg.run;
    json layers = json::array();
    for (const auto& l : run.network.layers)
        layers.push_back({{"fan_in", l.fan_in}, {"fan_out", l.fan_out}, {"activation", to_string(l.activation)},
                          {"residual", l.residual}});
    const DatasetConfig& d = run.dataset;
    json subset = {{"classes", d.subset.classes}, {"b_train", d.subset.b_train}, {"b_val", d.subset.b_val},
                   {"stratified", d.subset.stratified}};
    subset["shuffle_seed"] = d.subset.shuffle_seed ? json(*d.subset.shuffle_seed) : json(nullptr);
    json dataset = {{"kind", d.kind},
                    {"seed", d.seed},
                    {"n_train", d.n_train},
                    {"n_val", d.n_val},
                    {"noise_sd", d.noise_sd},
                    {"src",
                     {{"n_per_class", d.src.n_per_class},
                      {"n_val_per_class", d.src.n_val_per_class},
                      {"turns", d.src.turns},
                      {"noise_sd", d.src.noise_sd},
                      {"r0", d.src.r0},
                      {"b", d.src.growth}}},
                    {"images", d.images_path},
                    {"labels", d.labels_path},
                    {"cache", d.cache_path},
                    {"subset", subset}};
    json doc = {{"format_version", kFormatVersion},
                {"seed", run.seed},
                {"epochs", run.epochs},
                {"dataset", dataset},
                {"network", {{"loss", to_string(run.network.loss)}, {"layers", layers}}},
                {"schedule", schedule_json(run.schedule)},
                {"lanczos", {{"iterations", run.lanczos.iterations}, {"reorthogonalize", run.lanczos.reorthogonalize}}},
                {"metrics", {{"alpha", run.metrics.alpha}, {"scale_index", run.metrics.scale_index}}},
                {"spectrum_every", run.spectrum_every},
                {"checkpoint_vectors", run.checkpoint_vectors},
                {"hessian_layers", run.hessian_layers},
                {"keep_gradients", run.keep_gradients},
                {"divergence_threshold", run.divergence_threshold},
                {"phases", {{"tau", cfg.phases.tau}, {"rho", cfg.phases.rho}}}};
    // epochs above already carry any compensation, so it is not re-applied on reload.
    if (!cfg.sweep_etas.empty() || !cfg.sweep_seeds.empty())
        doc["sweep"] = {{"etas", cfg.sweep_etas}, {"seeds", cfg.sweep_seeds}};
    if (!cfg.reduction_epochs.empty())
        doc["reduction"] = {{"eta1", cfg.reduction_eta1}, {"reduce_epochs", cfg.reduction_epochs}};
    if (!cfg.batch_sizes.empty()) doc["batch_sweep"] = {{"sizes", cfg.batch_sizes}, {"seed", cfg.batch_seed}};
    return doc;
}

std::string config_digest(const ExperimentConfig& cfg) {
    json doc = to_json(cfg);
    doc.erase("seed");
    return to_hex(fnv1a(doc.dump())).substr(0, 12);
}

std::string run_id(const ExperimentConfig& cfg) { return config_digest(cfg) + "-s" + std::to_string(cfg.run.seed); }

}  // namespace hesslab
