#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedgen {

namespace fs = std::filesystem;

using MatD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct SeriesError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One machine run: K sensors over L timesteps plus per-timestep labels and the
// true change point.  L = t_life + 1 (the run is recorded up to its end of life).
struct RunRecord {
    MatD sensors;                       // K x L
    std::vector<std::uint8_t> labels;   // length L
    std::optional<long> tau;            // change point (atu), if any
    long t_life = 0;                    // min(horizon, failure time)
    std::string run_id;
    int client_id = 0;

    long K() const { return sensors.rows(); }
    long L() const { return sensors.cols(); }
};

struct SensorWindow {
    MatD data;      // K x W
    long start_t = 0;
    std::string run_id;
};

struct NormalizationStats {
    Eigen::VectorXd mean;  // length K
    Eigen::VectorXd std;   // length K, floored at 1e-8
};

// windows at 0, stride, 2*stride, ...; a tail window ending at L-1 is appended
// when the grid does not already cover it
std::vector<SensorWindow> windowize(const RunRecord& run, long size, long stride);

// start offsets only (cheap form of the above; same rule)
std::vector<long> window_starts(long L, long size, long stride);

NormalizationStats fit_normalization(const std::vector<RunRecord>& train_runs);
RunRecord apply_normalization(const RunRecord& run, const NormalizationStats& stats);
RunRecord invert_normalization(const RunRecord& run, const NormalizationStats& stats);

// rebuild labels from tau via the persistent rule and compare with stored ones
bool labels_consistent(const RunRecord& run);
std::vector<std::uint8_t> labels_from_tau(std::optional<long> tau, long L);

// serialization: <run_id>.csv (t,s1..sK,label) + <run_id>.json sidecar
void save_run(const RunRecord& run, const fs::path& dir);
RunRecord load_run(const fs::path& dir, const std::string& run_id);

// per-client splits; train is normal-only by construction
struct ClientDataset {
    int client_id = 0;
    std::vector<RunRecord> train;
    std::vector<RunRecord> val;
    std::vector<RunRecord> test;
};

}  // namespace fedgen
