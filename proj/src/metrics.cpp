#include "fedgen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "fedgen/io_util.hpp"

namespace fedgen {

std::pair<double, double> time_offsets(std::optional<long> tau, std::optional<long> tau_hat,
                                       long t_life) {
    if (tau && tau_hat) {
        long d = *tau - *tau_hat;
        if (d >= 0) return {static_cast<double>(d), 0.0};
        return {0.0, static_cast<double>(-d)};
    }
    if (tau_hat) return {static_cast<double>(t_life - *tau_hat), 0.0};
    if (tau) return {0.0, static_cast<double>(t_life - *tau)};
    return {0.0, 0.0};
}

RunOutcome make_outcome(std::string run_id, int client_id, std::optional<long> tau,
                        std::optional<long> tau_hat, long t_life) {
    RunOutcome o;
    o.run_id = std::move(run_id);
    o.client_id = client_id;
    o.tau = tau;
    o.tau_hat = tau_hat;
    o.t_life = t_life;
    std::tie(o.dt_fp, o.dt_fn) = time_offsets(tau, tau_hat, t_life);
    return o;
}

namespace {

struct Confusion {
    long tp = 0, fp = 0, fn = 0;
};

void accumulate(Confusion& c, const std::vector<std::uint8_t>& truth,
                const std::vector<std::uint8_t>& pred) {
    if (truth.size() != pred.size())
        throw std::invalid_argument("point_metrics: label length mismatch");
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (pred[i] && truth[i]) ++c.tp;
        else if (pred[i]) ++c.fp;
        else if (truth[i]) ++c.fn;
    }
}

PointMetrics from_confusion(const Confusion& c) {
    PointMetrics m;
    m.precision = (c.tp + c.fp) > 0 ? static_cast<double>(c.tp) / (c.tp + c.fp) : 0.0;
    m.recall = (c.tp + c.fn) > 0 ? static_cast<double>(c.tp) / (c.tp + c.fn) : 0.0;
    m.f1 = (m.precision + m.recall) > 0
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
    return m;
}

}  // namespace

PointMetrics point_metrics(const std::vector<std::uint8_t>& truth,
                           const std::vector<std::uint8_t>& pred) {
    Confusion c;
    accumulate(c, truth, pred);
    return from_confusion(c);
}

double pr_auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& truth) {
    if (scores.size() != truth.size())
        throw std::invalid_argument("pr_auc: score/label length mismatch");
    long pos = 0;
    for (auto y : truth) pos += y ? 1 : 0;
    if (pos == 0) return 0.0;

    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    // walk the cuts from the highest score down, one step per distinct value
    double area = 0.0, prev_recall = 0.0;
    long tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < idx.size()) {
        double v = scores[idx[i]];
        while (i < idx.size() && scores[idx[i]] == v) {
            (truth[idx[i]] ? tp : fp) += 1;
            ++i;
        }
        double recall = static_cast<double>(tp) / static_cast<double>(pos);
        double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return area;
}

double cost(const std::vector<RunOutcome>& outcomes, const CostConfig& cfg) {
    if (outcomes.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& o : outcomes) {
        double norm = cfg.normalizer > 0 ? cfg.normalizer : static_cast<double>(o.t_life);
        double raw = cfg.c_early * o.dt_fp + cfg.c_late * o.dt_fn;
        double v = raw <= 0 ? 0.0 : (norm > 0 ? raw / norm : 1.0);
        acc += std::min(1.0, v);
    }
    return acc / static_cast<double>(outcomes.size());
}

ClientMetrics client_metrics(const std::vector<RunEval>& runs, const CostConfig& cfg) {
    if (runs.empty()) throw std::invalid_argument("client_metrics: no runs");
    Confusion conf;
    std::vector<double> all_scores;
    std::vector<std::uint8_t> all_truth;
    std::vector<RunOutcome> outcomes;
    double fp_sum = 0, fn_sum = 0;
    for (const auto& r : runs) {
        if (r.truth.size() != r.ts_scores.size())
            throw std::invalid_argument("client_metrics: score/label length mismatch in run " +
                                        r.outcome.run_id);
        accumulate(conf, r.truth, r.pred);
        all_scores.insert(all_scores.end(), r.ts_scores.begin(), r.ts_scores.end());
        all_truth.insert(all_truth.end(), r.truth.begin(), r.truth.end());
        outcomes.push_back(r.outcome);
        fp_sum += r.outcome.dt_fp;
        fn_sum += r.outcome.dt_fn;
    }
    auto pm = from_confusion(conf);
    ClientMetrics m;
    m.precision = pm.precision;
    m.recall = pm.recall;
    m.f1 = pm.f1;
    m.pr_auc = pr_auc(all_scores, all_truth);
    m.cost = cost(outcomes, cfg);
    m.dt_fp = fp_sum / static_cast<double>(runs.size());
    m.dt_fn = fn_sum / static_cast<double>(runs.size());
    return m;
}

ClientMetrics macro_average(const std::vector<ClientMetrics>& per_client) {
    ClientMetrics m;
    if (per_client.empty()) return m;
    for (const auto& c : per_client) {
        m.precision += c.precision;
        m.recall += c.recall;
        m.f1 += c.f1;
        m.pr_auc += c.pr_auc;
        m.cost += c.cost;
        m.dt_fp += c.dt_fp;
        m.dt_fn += c.dt_fn;
    }
    double n = static_cast<double>(per_client.size());
    m.precision /= n;
    m.recall /= n;
    m.f1 /= n;
    m.pr_auc /= n;
    m.cost /= n;
    m.dt_fp /= n;
    m.dt_fn /= n;
    return m;
}

void write_offsets_csv(const fs::path& path, const std::vector<RunOutcome>& outcomes) {
    std::ostringstream os;
    os << "run_id,client_id,tau,tau_hat,t_life,dt_fp,dt_fn\n";
    for (const auto& o : outcomes) {
        os << o.run_id << ',' << o.client_id << ',';
        if (o.tau) os << *o.tau;
        os << ',';
        if (o.tau_hat) os << *o.tau_hat;
        os << ',' << o.t_life << ',' << num_str(o.dt_fp) << ',' << num_str(o.dt_fn) << '\n';
    }
    write_text_file(path, os.str());
}

}  // namespace fedgen
