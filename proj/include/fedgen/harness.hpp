#pragma once

// experiment orchestration: the json experiment config (schema-checked, every
// offending key reported at once), the five scenario presets, and the staged
// pipeline generate-data -> train -> calibrate -> evaluate, plus the
// communication report and the scenario x family matrix driver.
//
// stages are resumable: each one reads only the artifacts of the stage before
// it and fails with a PrereqError naming the command to run when they are
// missing. identical config + seed reproduces every artifact byte for byte.

#include <nlohmann/json.hpp>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedgen/federation.hpp"
#include "fedgen/fleet.hpp"
#include "fedgen/metrics.hpp"
#include "fedgen/swat.hpp"

namespace fedgen {

enum class Scenario { Centralized, Independent, FedFull, FedAnalysis, FedSynthesis };

Scenario parse_scenario(const std::string& s);
std::string scenario_name(Scenario s);

// engine policy per scenario. centralized pools everything into one engine
// client and exchanges nothing, so its round log shows zero traffic.
SharePolicy engine_policy(Scenario s);

struct DetectionConfig {
    int calibration_budget = 50;
    long m_consecutive = 1;
};

struct ExperimentConfig {
    Scenario scenario = Scenario::FedFull;
    Family family = Family::LstmVae;
    std::uint64_t seed = 0;
    fs::path output_dir = "out";
    fs::path dataset_dir;  // empty -> <output_dir>/dataset
    long window = 20;
    long stride = 5;
    bool synthetic = true;  // dataset: {"synthetic": ...} vs {"swat": ...}
    FleetConfig fleet;
    SwatPartitionConfig swat;
    nlohmann::json model;  // family hyperparameters; defaults per family
    FederationConfig federation;
    DetectionConfig detection;
    CostConfig evaluation;
    // run-all only: which cells of the scenario x family matrix to execute
    std::vector<Scenario> matrix_scenarios;
    std::vector<Family> matrix_families;
};

// config file rejected (exit code 2); what() lists every offending key
struct ConfigError : std::runtime_error {
    std::vector<std::string> problems;
    explicit ConfigError(std::vector<std::string> ps);
};

// required prior-stage artifact missing (exit code 3); what() names the
// command that produces it
struct PrereqError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void to_json(nlohmann::json& j, const FederationConfig& c);  // omits the seed
void from_json(const nlohmann::json& j, FederationConfig& c);
void to_json(nlohmann::json& j, const DetectionConfig& c);
void from_json(const nlohmann::json& j, DetectionConfig& c);
void to_json(nlohmann::json& j, const CostConfig& c);
void from_json(const nlohmann::json& j, CostConfig& c);

// strict parse: unknown keys, type mismatches, bad enum values and domain
// violations are all collected into one ConfigError. missing keys take their
// defaults. `raw` is the parsed config file.
ExperimentConfig parse_config(const nlohmann::json& raw);
ExperimentConfig load_config(const fs::path& path);

// canonical echo of the science parameters (everything except output/dataset
// locations and the run-all matrix), with all defaults materialised
nlohmann::json config_json(const ExperimentConfig& cfg);
std::string config_hash(const ExperimentConfig& cfg);  // fnv1a64 of the echo
fs::path dataset_dir(const ExperimentConfig& cfg);

void cmd_generate_data(const ExperimentConfig& cfg);
void cmd_train(const ExperimentConfig& cfg);
void cmd_calibrate(const ExperimentConfig& cfg);
void cmd_evaluate(const ExperimentConfig& cfg);
void cmd_comm_report(const ExperimentConfig& cfg);
void cmd_run_all(const ExperimentConfig& cfg);

}  // namespace fedgen
