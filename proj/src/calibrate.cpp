#include "fedgen/calibrate.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "fedgen/metrics.hpp"

namespace fedgen {

double calibration_objective(const std::vector<ScoredRun>& runs, double eps, long m_consecutive) {
    if (runs.empty()) throw std::invalid_argument("calibration_objective: empty validation set");
    double acc = 0.0;
    for (const auto& r : runs) {
        auto tau_hat = predict_tau(r.series, eps, m_consecutive);
        auto [fp, fn] = time_offsets(r.tau, tau_hat, r.t_life);
        acc += fp + fn;
    }
    return acc / static_cast<double>(runs.size());
}

namespace {

double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }
double norm_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }

// posterior mean/sd at `cand` of a unit-variance squared-exponential gp fit
// to (xs, ys); inputs live in [0, 1], ys get standardised internally
void gp_posterior(const std::vector<double>& xs, const std::vector<double>& ys,
                  const std::vector<double>& cand, double ell, std::vector<double>& mu,
                  std::vector<double>& sd) {
    const long n = static_cast<long>(xs.size());
    double ymean = 0, yvar = 0;
    for (double y : ys) ymean += y;
    ymean /= static_cast<double>(n);
    for (double y : ys) yvar += (y - ymean) * (y - ymean);
    double ysd = std::sqrt(yvar / static_cast<double>(n));
    if (ysd < 1e-12) ysd = 1.0;  // flat objective so far: pure-exploration posterior

    double inv2l2 = 1.0 / (2.0 * ell * ell);

    Eigen::MatrixXd K(n, n);
    for (long i = 0; i < n; ++i)
        for (long j = 0; j < n; ++j) {
            double d = xs[i] - xs[j];
            K(i, j) = std::exp(-d * d * inv2l2);
        }
    Eigen::VectorXd yv(n);
    for (long i = 0; i < n; ++i) yv(i) = (ys[i] - ymean) / ysd;

    double jitter = 1e-8;
    Eigen::LLT<Eigen::MatrixXd> llt;
    for (int tries = 0; tries < 8; ++tries) {
        llt.compute(K + jitter * Eigen::MatrixXd::Identity(n, n));
        if (llt.info() == Eigen::Success) break;
        jitter *= 10.0;
    }
    Eigen::VectorXd alpha = llt.solve(yv);

    mu.resize(cand.size());
    sd.resize(cand.size());
    Eigen::VectorXd kstar(n);
    for (std::size_t c = 0; c < cand.size(); ++c) {
        for (long i = 0; i < n; ++i) {
            double d = cand[c] - xs[i];
            kstar(i) = std::exp(-d * d * inv2l2);
        }
        mu[c] = ymean + ysd * kstar.dot(alpha);
        Eigen::VectorXd v = llt.matrixL().solve(kstar);
        double var = std::max(0.0, 1.0 + jitter - v.squaredNorm());
        sd[c] = ysd * std::sqrt(var);
    }
}

}  // namespace

Threshold calibrate_threshold(const std::vector<ScoredRun>& runs, int budget, long m_consecutive,
                              int client_id) {
    if (runs.empty()) throw std::invalid_argument("calibrate_threshold: empty validation set");
    if (budget < 1) throw std::invalid_argument("calibrate_threshold: budget must be >= 1");

    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& r : runs)
        for (double s : r.series.scores) {
            lo = std::min(lo, s);
            hi = std::max(hi, s);
        }
    if (!std::isfinite(lo)) throw std::invalid_argument("calibrate_threshold: no scored windows");

    // J is piecewise constant, and its breakpoints are far sparser than the
    // raw scores: per run, the detection time only moves when eps crosses a
    // strict prefix maximum of the m-window rolling minimum of that run's
    // scores (a streak of m scores exceeds eps exactly when its minimum
    // does).  the left edges of J's true plateaus are those values, so the
    // search space is usually small enough to sweep outright.
    std::vector<double> edges{lo};
    for (const auto& r : runs) {
        const auto& s = r.series.scores;
        long n = static_cast<long>(s.size());
        double prefix_max = -std::numeric_limits<double>::infinity();
        for (long j = 0; j + m_consecutive <= n; ++j) {
            double roll_min = s[static_cast<std::size_t>(j)];
            for (long k = 1; k < m_consecutive; ++k)
                roll_min = std::min(roll_min, s[static_cast<std::size_t>(j + k)]);
            if (roll_min > prefix_max) {
                prefix_max = roll_min;
                edges.push_back(roll_min);
            }
        }
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

    std::vector<char> probed(edges.size(), 0);
    auto plateau_of = [&](double x) {
        auto it = std::upper_bound(edges.begin(), edges.end(), x);
        return static_cast<std::size_t>(it - edges.begin() - 1);
    };
    std::vector<double> xs, ys;
    auto eval = [&](double x) {
        xs.push_back(x);
        ys.push_back(calibration_objective(runs, x, m_consecutive));
        probed[plateau_of(x)] = 1;
    };

    int n_init = std::min(10, budget);
    if (n_init == 1) {
        eval(0.5 * (lo + hi));
    } else {
        for (int i = 0; i < n_init; ++i)
            eval(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_init - 1));
    }

    // the surrogate lives in rank space (plateau index scaled to [0, 1]):
    // neighbouring plateaus can carry very different J but may be separated
    // by a sliver of eps, so the raw scale would hide them from the gp,
    // while under the rank transform every plateau is one resolvable step
    double denom = static_cast<double>(std::max<std::size_t>(edges.size() - 1, 1));
    while (static_cast<int>(xs.size()) < budget) {
        std::vector<double> fresh;          // eps of plateaus not probed yet, ascending
        std::vector<double> cn;             // their rank coordinates
        for (std::size_t i = 0; i < edges.size(); ++i)
            if (!probed[i]) {
                fresh.push_back(edges[i]);
                cn.push_back(static_cast<double>(i) / denom);
            }
        if (fresh.empty()) {
            eval(lo);  // every plateau seen: burn the leftover budget in place
            continue;
        }
        std::vector<double> xn(xs.size());
        for (std::size_t i = 0; i < xs.size(); ++i)
            xn[i] = static_cast<double>(plateau_of(xs[i])) / denom;

        // coarse-to-fine lengthscale: the first stretch of the search senses
        // the basin trend across several plateaus, the rest resolves single
        // plateaus so slivers next to a deep probe still get checked
        double frac = static_cast<double>(xs.size()) / static_cast<double>(budget);
        double ell = frac < 0.6 ? std::max(0.05, 3.0 / denom) : std::max(0.015, 1.0 / denom);
        // the surrogate models log(1 + J): J is nonnegative with a minimum
        // near zero, and the warp stretches the low range so deep plateaus
        // dominate the fit instead of drowning in the high-J spread
        std::vector<double> zs(ys.size());
        for (std::size_t i = 0; i < ys.size(); ++i) zs[i] = std::log1p(ys[i]);
        std::vector<double> mu, sd;
        gp_posterior(xn, zs, cn, ell, mu, sd);
        double ybest = *std::min_element(zs.begin(), zs.end());

        double best_ei = 0.0;
        std::size_t best_i = fresh.size();
        for (std::size_t i = 0; i < fresh.size(); ++i) {
            double imp = ybest - mu[i];
            double ei;
            if (sd[i] > 1e-12) {
                double z = imp / sd[i];
                ei = imp * norm_cdf(z) + sd[i] * norm_pdf(z);
            } else {
                ei = std::max(imp, 0.0);
            }
            if (ei > best_ei) {  // strict: ties keep the smaller eps
                best_ei = ei;
                best_i = i;
            }
        }
        if (best_i == fresh.size()) {
            // surrogate sees no improvement anywhere: probe the biggest gap
            double best_gap = -1.0;
            for (std::size_t i = 0; i < fresh.size(); ++i) {
                double near = std::numeric_limits<double>::infinity();
                for (double x : xn) near = std::min(near, std::abs(cn[i] - x));
                if (near > best_gap) {
                    best_gap = near;
                    best_i = i;
                }
            }
        }
        eval(fresh[best_i]);
    }

    std::size_t bi = 0;
    for (std::size_t i = 1; i < xs.size(); ++i)
        if (ys[i] < ys[bi] || (ys[i] == ys[bi] && xs[i] < xs[bi])) bi = i;
    Threshold th;
    th.epsilon = xs[bi];
    th.client_id = client_id;
    th.objective = ys[bi];
    th.evaluations = static_cast<int>(xs.size());
    return th;
}

}  // namespace fedgen
