#pragma once

#include <map>
#include <nlohmann/json_fwd.hpp>

#include "fedgen/series.hpp"

namespace fedgen {

// Synthetic degradation fleet.  Each client is a family of machines with its
// own drift/seasonality signature; each run adds small signature jitter, sensor
// noise and a Brownian term on the latent degradation.  A run turns anomalous
// when the degradation D(t) crosses d_f and is cut short when it crosses d_fail.
struct FleetConfig {
    int C = 5;
    int K = 10;
    long T = 1000;
    int n_train = 30;
    int n_val = 65;
    int n_test = 65;

    double d_f = 6.0;
    double d_fail = 12.0;
    double drift_range[2] = {0.009, 0.013};
    double season_amp_range[2] = {0.5, 1.5};
    double season_period_range[2] = {40.0, 80.0};
    double season_phase_range[2] = {0.0, 6.283185307179586};
    double noise_std = 0.1;

    // generator internals (documented stand-in; all deterministic given seed)
    double brownian_std = 0.05;          // latent degradation random walk
    double sensor_gain_range[2] = {0.5, 1.5};   // |a_k| client signature
    double sensor_offset_std = 0.5;      // b_k client signature
    double anomaly_gain_range[2] = {0.3, 0.8};  // g_k response to (D - d_f)
    double anomaly_noise_factor = 1.5;   // noise inflation for t >= tau
    double run_jitter_gain = 0.1;        // per-run multiplicative jitter on a_k
    double run_jitter_offset = 0.2;      // per-run additive jitter on b_k
    double run_jitter_drift = 0.15;      // per-run multiplicative jitter on drift
    double run_jitter_phase = 0.3;       // per-run phase wobble (radians)

    std::uint64_t seed = 1;
};

void to_json(nlohmann::json& j, const FleetConfig& c);
void from_json(const nlohmann::json& j, FleetConfig& c);

std::map<int, ClientDataset> generate_fleet(const FleetConfig& cfg);

// dataset directory layout: <root>/client_<c>/<run_id>.{csv,json} plus a
// top-level dataset.json manifest (config echo + per-file content hashes)
void write_dataset(const std::map<int, ClientDataset>& fleet, const nlohmann::json& cfg_echo,
                   std::uint64_t seed, const fs::path& root);
std::map<int, ClientDataset> read_dataset(const fs::path& root);

}  // namespace fedgen
