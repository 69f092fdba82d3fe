#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "hesslab/analysis.hpp"
#include "hesslab/trainer.hpp"

namespace hesslab {

inline constexpr int kFormatVersion = 1;

// Everything a CLI config file can carry. Sections not used by a given
// subcommand keep their defaults.
struct ExperimentConfig {
    RunConfig run;
    PhaseConfig phases;
    // epochs = compensated_epochs(eta, base, eta_b) when enabled
    bool compensate_epochs = false;
    long compensation_base = 360;
    double compensation_eta_b = 0.05;

    // sweep
    std::vector<double> sweep_etas;
    std::vector<std::uint64_t> sweep_seeds;

    // eta-reduction-sweep
    double reduction_eta1 = 0.02;
    std::vector<long> reduction_epochs;

    // batch-sweep
    std::vector<std::size_t> batch_sizes;
    std::uint64_t batch_seed = 0;
};

// Parses and validates a config document. Errors are ConfigError messages
// prefixed with the JSON pointer of the offending field.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::string& path);

// Fully materialized config (every default written out).
nlohmann::json to_json(const ExperimentConfig& cfg);

// Digest of the resolved config with the seed removed, so that runs which
// differ only by seed share a prefix.
std::string config_digest(const ExperimentConfig& cfg);
std::string run_id(const ExperimentConfig& cfg);

// Relative dataset paths that do not exist are retried under $HESSLAB_DATA_DIR.
std::string resolve_data_path(const std::string& path);

}  // namespace hesslab
