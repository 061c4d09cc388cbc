#pragma once

// per-run anomaly scoring: window the run, score windows in fixed batches,
// and turn a score series plus threshold into a detection time.

#include <optional>

#include "fedgen/models.hpp"
#include "fedgen/series.hpp"

namespace fedgen {

struct ScoreSeries {
    std::vector<double> scores;
    std::vector<long> start_ts;  // aligned window starts, ascending
    std::string run_id;
};

// score every window of a run.  windows are batched `batch` at a time and
// each batch gets a stream keyed by (seed_base, hash(run_id), batch index),
// so rescoring with identical arguments is bit-identical regardless of when
// or where it happens.  throws on a non-finite score, naming run and window.
ScoreSeries score_run(const AnyModel& model, const RunRecord& run, long window, long stride,
                      std::uint64_t seed_base, long batch = 64);

// detection time: start of the first window that opens a streak of at least
// m_consecutive scores strictly above eps; empty when no such streak exists
std::optional<long> predict_tau(const ScoreSeries& s, double eps, long m_consecutive = 1);

// score of the latest window starting at or before each t in [0, L)
std::vector<double> per_timestep_scores(const ScoreSeries& s, long L);

// dump/load as csv with columns start_t,score
void write_score_csv(const fs::path& path, const ScoreSeries& s);
ScoreSeries read_score_csv(const fs::path& path, const std::string& run_id);

}  // namespace fedgen
