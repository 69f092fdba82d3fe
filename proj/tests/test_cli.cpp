#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hesslab/cli.hpp"
#include "hesslab/config.hpp"
#include "hesslab/errors.hpp"

using namespace hesslab;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("hesslab_cli_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

json small_config() {
    return json::parse(R"({
        "format_version": 1,
        "seed": 4,
        "epochs": 8,
        "dataset": {"kind": "wreg", "n_train": 24, "n_val": 16, "noise_sd": 0.05},
        "network": {"input_dim": 1, "hidden": [6, 6], "output_dim": 1, "loss": "mse"},
        "schedule": {"kind": "constant", "eta": 0.05},
        "lanczos": {"iterations": 12},
        "spectrum_every": 2,
        "checkpoint_vectors": 3,
        "keep_gradients": true
    })");
}

std::string write_config(const fs::path& dir, const json& doc, const std::string& name = "cfg.json") {
    const auto p = dir / name;
    std::ofstream(p) << doc.dump(2);
    return p.string();
}

std::string config_error(const json& doc) {
    try {
        parse_config(doc);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

std::string read_file(const fs::path& p) {
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

fs::path only_subdir(const fs::path& p) {
    for (const auto& e : fs::directory_iterator(p))
        if (e.is_directory()) return e.path();
    return {};
}

}  // namespace

TEST_CASE("config errors carry the JSON pointer") {
    auto doc = small_config();
    doc["schedule"]["eta"] = "fast";
    CHECK(config_error(doc).find("/schedule/eta") != std::string::npos);

    doc = small_config();
    doc["dataset"]["colour"] = 3;
    CHECK(config_error(doc).find("/dataset/colour") != std::string::npos);

    doc = small_config();
    doc["metrics"] = {{"alpha", -1.0}};
    CHECK_FALSE(config_error(doc).empty());

    doc = small_config();
    doc["format_version"] = 99;
    CHECK(config_error(doc).find("/format_version") != std::string::npos);

    doc = small_config();
    doc["network"]["hidden"][1] = -2;
    CHECK(config_error(doc).find("/network/hidden/1") != std::string::npos);

    CHECK(config_error(small_config()).empty());
}

TEST_CASE("epoch compensation in configs") {
    auto doc = small_config();
    doc["schedule"]["eta"] = 0.01;
    doc["epoch_compensation"] = {{"enabled", true}};
    const auto cfg = parse_config(doc);
    CHECK(cfg.run.epochs == 1800);
    // the resolved config re-parses to the same run
    CHECK(config_digest(parse_config(to_json(cfg))) == config_digest(cfg));
}

TEST_CASE("run ids depend on the seed and the config") {
    const auto a = parse_config(small_config());
    auto doc = small_config();
    doc["seed"] = 5;
    const auto b = parse_config(doc);
    CHECK(run_id(a) != run_id(b));
    CHECK(config_digest(a) == config_digest(b));
}

TEST_CASE("train, then analyse the run") {
    TempDir tmp;
    const auto cfg = write_config(tmp.path, small_config());
    const auto out = (tmp.path / "runs").string();
    REQUIRE(cli::run({"train", "--config", cfg, "--out", out}) == cli::kExitOk);
    const fs::path run = only_subdir(out);
    for (const char* f : {"config.resolved.json", "trajectory.csv", "eigen.hspec", "params.bin", "gradients.bin", "manifest.json"})
        CHECK(fs::exists(run / f));
    const json manifest = json::parse(read_file(run / "manifest.json"));
    CHECK(manifest["format_version"] == 1);
    CHECK(manifest["diverged"] == false);
    CHECK(manifest.contains("conventions"));

    // refuses to overwrite without --force, and reruns are identical
    CHECK(cli::run({"train", "--config", cfg, "--out", out}) == cli::kExitConfig);
    const std::string first = read_file(run / "trajectory.csv");
    CHECK(cli::run({"train", "--config", cfg, "--out", out, "--force"}) == cli::kExitOk);
    CHECK(read_file(run / "trajectory.csv") == first);

    const auto analysis = (tmp.path / "analysis").string();
    CHECK(cli::run({"similarity", "--a", run.string(), "--kind", "vmax", "--out", analysis}) == cli::kExitOk);
    CHECK(fs::exists(fs::path(analysis) / "similarity_vmax.csv"));
    CHECK(cli::run({"similarity", "--a", run.string(), "--kind", "gr", "--out", analysis}) == cli::kExitOk);
    CHECK(cli::run({"similarity", "--a", run.string(), "--kind", "hessian", "--out", analysis}) == cli::kExitConfig);

    CHECK(cli::run({"spectrum", "--run", run.string(), "--out", analysis}) == cli::kExitOk);
    CHECK(fs::exists(fs::path(analysis) / "spectrum.csv"));
    CHECK(fs::exists(fs::path(analysis) / "swaps.csv"));

    CHECK(cli::run({"phases", "--run", run.string()}) == cli::kExitOk);
    const std::string phased = read_file(run / "trajectory.csv");
    CHECK(phased.find("stable") != std::string::npos);

    CHECK(cli::run({"perturb", "--run", run.string(), "--out", analysis, "--top", "2", "--grid", "21"}) == cli::kExitOk);
    const json pert = json::parse(read_file(fs::path(analysis) / "perturbation.json"));
    CHECK(pert["directions"].size() == 2);
    CHECK(cli::run({"perturb", "--run", run.string(), "--out", analysis, "--layers", "1", "--grid", "5"}) == cli::kExitOk);
    CHECK(cli::run({"perturb", "--run", run.string(), "--out", analysis, "--c-p", "0"}) == cli::kExitConfig);

    // cross-trajectory similarity across architectures is refused
    auto other = small_config();
    other["network"]["hidden"] = {5, 6};
    const auto other_cfg = write_config(tmp.path, other, "other.json");
    const auto other_out = (tmp.path / "other").string();
    REQUIRE(cli::run({"train", "--config", other_cfg, "--out", other_out}) == cli::kExitOk);
    CHECK(cli::run({"similarity", "--a", run.string(), "--b", only_subdir(other_out).string(), "--out", analysis}) ==
          cli::kExitConfig);
}

TEST_CASE("divergent training exits with code 2") {
    TempDir tmp;
    auto doc = small_config();
    doc["schedule"]["eta"] = 50.0;
    const auto cfg = write_config(tmp.path, doc);
    CHECK(cli::run({"train", "--config", cfg, "--out", (tmp.path / "runs").string()}) == cli::kExitDiverged);
    const json manifest = json::parse(read_file(only_subdir(tmp.path / "runs") / "manifest.json"));
    CHECK(manifest["diverged"] == true);
}

TEST_CASE("bad invocations exit with code 1") {
    CHECK(cli::run({}) == cli::kExitConfig);
    CHECK(cli::run({"train"}) == cli::kExitConfig);
    CHECK(cli::run({"train", "--config", "/nonexistent/cfg.json"}) == cli::kExitConfig);
    CHECK(cli::run({"frobnicate"}) == cli::kExitConfig);
}

TEST_CASE("sweep and correlation") {
    TempDir tmp;
    auto doc = small_config();
    doc["keep_gradients"] = false;
    doc["sweep"] = {{"etas", {0.02, 0.05}}, {"seeds", {0, 1}}};
    const auto cfg = write_config(tmp.path, doc);
    const auto out = (tmp.path / "sweeps").string();
    REQUIRE(cli::run({"sweep", "--config", cfg, "--out", out, "--jobs", "2"}) == cli::kExitOk);
    const fs::path root = only_subdir(out);
    const json manifest = json::parse(read_file(root / "sweep_manifest.json"));
    CHECK(manifest["total_models"] == 4);
    CHECK(fs::exists(root / "correlation.csv"));
    CHECK(cli::run({"analyze-correlation", "--runs", root.string(), "--out", (tmp.path / "corr").string()}) == cli::kExitOk);
}

TEST_CASE("batch and reduction sweeps") {
    TempDir tmp;
    auto doc = small_config();
    doc["batch_sweep"] = {{"sizes", {6, 12, 24}}, {"seed", 3}};
    doc["reduction"] = {{"eta1", 0.01}, {"reduce_epochs", {0, 4, 6}}};
    const auto cfg = write_config(tmp.path, doc);
    CHECK(cli::run({"batch-sweep", "--config", cfg, "--out", (tmp.path / "b").string()}) == cli::kExitOk);
    CHECK(fs::exists(only_subdir(tmp.path / "b") / "batch_sweep.json"));
    CHECK(cli::run({"eta-reduction-sweep", "--config", cfg, "--out", (tmp.path / "r").string()}) == cli::kExitOk);
    const json red = json::parse(read_file(only_subdir(tmp.path / "r") / "eta_reduction_sweep.json"));
    CHECK(red["variants"].size() == 3);

    doc["batch_sweep"]["sizes"] = {6, 100};
    const auto bad = write_config(tmp.path, doc, "bad.json");
    CHECK(cli::run({"batch-sweep", "--config", bad, "--out", (tmp.path / "b2").string()}) == cli::kExitConfig);
}
