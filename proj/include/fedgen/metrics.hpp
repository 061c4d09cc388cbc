#pragma once

// timing-aware evaluation: early/late offsets per run, timestamp-level
// precision/recall/F1 and PR-AUC, an asymmetric cost summary, and the
// per-client -> macro aggregation used in reports.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace fedgen {

namespace fs = std::filesystem;

// detection-timing outcome of one run; at most one offset is nonzero
struct RunOutcome {
    std::string run_id;
    int client_id = 0;
    std::optional<long> tau;      // true change point
    std::optional<long> tau_hat;  // detection time
    long t_life = 0;
    double dt_fp = 0;  // alarm this many atu before the change (or on a healthy run)
    double dt_fn = 0;  // alarm this many atu after the change (or never)
};

// (dt_fp, dt_fn):
//   both defined      -> (tau - tau_hat, 0) if early, (0, tau_hat - tau) if late
//   only tau_hat      -> (t_life - tau_hat, 0)   false alarm on a healthy run
//   only tau          -> (0, t_life - tau)        missed detection
//   neither           -> (0, 0)
std::pair<double, double> time_offsets(std::optional<long> tau, std::optional<long> tau_hat,
                                       long t_life);

RunOutcome make_outcome(std::string run_id, int client_id, std::optional<long> tau,
                        std::optional<long> tau_hat, long t_life);

struct PointMetrics {
    double precision = 0;
    double recall = 0;
    double f1 = 0;
};

// per-timestamp binary labels; empty denominators resolve to 0
PointMetrics point_metrics(const std::vector<std::uint8_t>& truth,
                           const std::vector<std::uint8_t>& pred);

// area under the precision-recall curve, swept over every distinct score
// value with the step-wise (precision times recall-increment) rule
double pr_auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& truth);

struct CostConfig {
    double c_early = 1.0;
    double c_late = 2.0;
    double normalizer = 0.0;  // 0 -> normalise each run by its own t_life
};

// mean over runs of min(1, (c_early*dt_fp + c_late*dt_fn) / normalizer)
double cost(const std::vector<RunOutcome>& outcomes, const CostConfig& cfg);

struct ClientMetrics {
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    double pr_auc = 0;
    double cost = 0;
    double dt_fp = 0;  // mean over the client's runs
    double dt_fn = 0;
};

// one evaluated test run: outcome plus the per-timestep label/score rows
// that feed the pooled timestamp metrics
struct RunEval {
    RunOutcome outcome;
    std::vector<std::uint8_t> truth;  // length t_life + 1
    std::vector<std::uint8_t> pred;
    std::vector<double> ts_scores;
};

// timestamp metrics pooled over all of a client's runs, offsets averaged
ClientMetrics client_metrics(const std::vector<RunEval>& runs, const CostConfig& cfg);

// unweighted mean of every field across clients
ClientMetrics macro_average(const std::vector<ClientMetrics>& per_client);

// run-level plot data: run_id,client,tau,tau_hat,t_life,dt_fp,dt_fn
void write_offsets_csv(const fs::path& path, const std::vector<RunOutcome>& outcomes);

}  // namespace fedgen
