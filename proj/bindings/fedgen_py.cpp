// python surface: the staged experiment commands plus the small number of
// pure functions (traffic accounting, timing offsets, detection, threshold
// calibration, point metrics) that are useful from notebooks.  configs cross
// the boundary as json text; the `fedgen` python package wraps this with
// dict/path conveniences.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>
#include <optional>

#include "fedgen/calibrate.hpp"
#include "fedgen/harness.hpp"
#include "fedgen/scoring.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

fedgen::ExperimentConfig config_from_text(const std::string& text,
                                          std::optional<std::uint64_t> seed,
                                          std::optional<std::string> output) {
    json raw;
    try {
        raw = json::parse(text);
    } catch (const json::parse_error& e) {
        throw fedgen::ConfigError({std::string("not valid json: ") + e.what()});
    }
    fedgen::ExperimentConfig cfg = fedgen::parse_config(raw);
    if (seed) cfg.seed = *seed;
    if (output) cfg.output_dir = *output;
    return cfg;
}

void bind_stage(py::module_& m, const char* name,
                void (*fn)(const fedgen::ExperimentConfig&)) {
    m.def(
        name,
        [fn](const std::string& config, std::optional<std::uint64_t> seed,
             std::optional<std::string> output) {
            fedgen::ExperimentConfig cfg = config_from_text(config, seed, output);
            py::gil_scoped_release release;
            fn(cfg);
        },
        py::arg("config"), py::arg("seed") = std::nullopt, py::arg("output") = std::nullopt);
}

}  // namespace

PYBIND11_MODULE(_fedgen, m) {
    m.doc() = "federated generative time-series anomaly detection";

    py::register_exception<fedgen::ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<fedgen::PrereqError>(m, "PrereqError", PyExc_RuntimeError);

    bind_stage(m, "generate_data", &fedgen::cmd_generate_data);
    bind_stage(m, "train", &fedgen::cmd_train);
    bind_stage(m, "calibrate", &fedgen::cmd_calibrate);
    bind_stage(m, "evaluate", &fedgen::cmd_evaluate);
    bind_stage(m, "comm_report", &fedgen::cmd_comm_report);
    bind_stage(m, "run_all", &fedgen::cmd_run_all);

    m.def(
        "canonical_config",
        [](const std::string& config) {
            return fedgen::config_json(config_from_text(config, {}, {})).dump();
        },
        py::arg("config"), "fully-defaulted canonical echo of a config, as json text");
    m.def(
        "config_hash",
        [](const std::string& config) {
            return fedgen::config_hash(config_from_text(config, {}, {}));
        },
        py::arg("config"));

    m.def(
        "comm_cost",
        [](long long p_share, long rounds, long clients, double bandwidth_bps) {
            fedgen::CommCost c = fedgen::comm_cost(p_share, rounds, clients, bandwidth_bps);
            py::dict d;
            d["n_tx_round"] = c.n_tx_round;
            d["v_round_bytes"] = c.v_round_bytes;
            d["v_total_bytes"] = c.v_total_bytes;
            d["t_comm_round_s"] = c.t_comm_round_s;
            return d;
        },
        py::arg("p_share"), py::arg("rounds"), py::arg("clients"), py::arg("bandwidth_bps"),
        "per-round / total traffic for one (model, policy) pair");

    m.def(
        "count_shared_params",
        [](const std::string& family, const std::string& model_config, const std::string& policy) {
            fedgen::Family fam = fedgen::parse_family(family);
            json cfg = model_config.empty() ? fedgen::default_model_config(fam)
                                            : json::parse(model_config);
            fedgen::AnyModel model(fam, cfg, 1e-4, 0);
            return fedgen::count_params(model.params(), model.partition(),
                                        fedgen::parse_policy(policy));
        },
        py::arg("family"), py::arg("model_config") = std::string(), py::arg("policy") = "full",
        "parameters crossing the wire per direction for a family/policy");

    m.def(
        "time_offsets",
        [](std::optional<long> tau, std::optional<long> tau_hat, long t_life) {
            return fedgen::time_offsets(tau, tau_hat, t_life);
        },
        py::arg("tau"), py::arg("tau_hat"), py::arg("t_life"),
        "(dt_fp, dt_fn) of one run; at most one is nonzero");

    m.def(
        "point_metrics",
        [](const std::vector<std::uint8_t>& truth, const std::vector<std::uint8_t>& pred) {
            fedgen::PointMetrics pm = fedgen::point_metrics(truth, pred);
            py::dict d;
            d["precision"] = pm.precision;
            d["recall"] = pm.recall;
            d["f1"] = pm.f1;
            return d;
        },
        py::arg("truth"), py::arg("pred"));

    m.def("pr_auc", &fedgen::pr_auc, py::arg("scores"), py::arg("truth"));

    m.def(
        "predict_tau",
        [](const std::vector<double>& scores, const std::vector<long>& start_ts, double eps,
           long m_consecutive) {
            fedgen::ScoreSeries s;
            s.scores = scores;
            s.start_ts = start_ts;
            return fedgen::predict_tau(s, eps, m_consecutive);
        },
        py::arg("scores"), py::arg("start_ts"), py::arg("eps"), py::arg("m_consecutive") = 1,
        "start of the first streak of m scores strictly above eps, or None");

    m.def(
        "calibrate_threshold",
        [](const std::vector<std::tuple<std::vector<double>, std::vector<long>,
                                        std::optional<long>, long>>& runs,
           int budget, long m_consecutive, int client_id) {
            std::vector<fedgen::ScoredRun> rs;
            rs.reserve(runs.size());
            for (const auto& [scores, starts, tau, t_life] : runs) {
                fedgen::ScoredRun r;
                r.series.scores = scores;
                r.series.start_ts = starts;
                r.tau = tau;
                r.t_life = t_life;
                rs.push_back(std::move(r));
            }
            fedgen::Threshold t;
            {
                py::gil_scoped_release release;
                t = fedgen::calibrate_threshold(rs, budget, m_consecutive, client_id);
            }
            py::dict d;
            d["epsilon"] = t.epsilon;
            d["objective"] = t.objective;
            d["evaluations"] = t.evaluations;
            d["client_id"] = t.client_id;
            return d;
        },
        py::arg("runs"), py::arg("budget") = 50, py::arg("m_consecutive") = 1,
        py::arg("client_id") = 0,
        "runs are (scores, start_ts, tau, t_life) tuples; returns the fitted threshold");
}
