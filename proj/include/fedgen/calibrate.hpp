#pragma once

// per-client threshold calibration: minimise the mean detection-timing
// offset J(eps) over the observed validation score range with a 1-d
// gaussian-process surrogate and expected-improvement search.

#include "fedgen/scoring.hpp"

namespace fedgen {

struct Threshold {
    double epsilon = 0;
    int client_id = 0;
    double objective = 0;  // J at epsilon on the calibration runs
    int evaluations = 0;
};

// one validation run, scored exactly once up front; calibration only
// re-runs the cheap threshold sweep, never a model forward pass
struct ScoredRun {
    ScoreSeries series;
    std::optional<long> tau;
    long t_life = 0;
};

// J(eps) = mean over runs of dt_fp + dt_fn at predict_tau(series, eps, m)
double calibration_objective(const std::vector<ScoredRun>& runs, double eps, long m_consecutive);

// spend exactly `budget` objective evaluations: the first ten on an
// equispaced grid across [min, max] of the observed scores, the rest guided
// by expected improvement under the surrogate.  ties resolve to the smaller
// eps (earlier detection preferred).
Threshold calibrate_threshold(const std::vector<ScoredRun>& runs, int budget, long m_consecutive,
                              int client_id);

}  // namespace fedgen
