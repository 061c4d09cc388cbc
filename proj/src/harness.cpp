#include "fedgen/harness.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "fedgen/calibrate.hpp"
#include "fedgen/rng.hpp"
#include "fedgen/scoring.hpp"

namespace fedgen {

using nlohmann::json;

// ---- scenarios ------------------------------------------------------------

Scenario parse_scenario(const std::string& s) {
    if (s == "centralized") return Scenario::Centralized;
    if (s == "independent") return Scenario::Independent;
    if (s == "fed_full") return Scenario::FedFull;
    if (s == "fed_analysis") return Scenario::FedAnalysis;
    if (s == "fed_synthesis") return Scenario::FedSynthesis;
    throw std::invalid_argument("unknown scenario: " + s);
}

std::string scenario_name(Scenario s) {
    switch (s) {
        case Scenario::Centralized: return "centralized";
        case Scenario::Independent: return "independent";
        case Scenario::FedFull: return "fed_full";
        case Scenario::FedAnalysis: return "fed_analysis";
        case Scenario::FedSynthesis: return "fed_synthesis";
    }
    throw std::logic_error("scenario_name");
}

SharePolicy engine_policy(Scenario s) {
    switch (s) {
        // one pooled client, nothing to exchange -> zero-traffic round log
        case Scenario::Centralized: return SharePolicy::Independent;
        case Scenario::Independent: return SharePolicy::Independent;
        case Scenario::FedFull: return SharePolicy::Full;
        case Scenario::FedAnalysis: return SharePolicy::AnalysisOnly;
        case Scenario::FedSynthesis: return SharePolicy::SynthesisOnly;
    }
    throw std::logic_error("engine_policy");
}

static const std::vector<Scenario> kAllScenarios{
    Scenario::Centralized, Scenario::Independent, Scenario::FedFull, Scenario::FedAnalysis,
    Scenario::FedSynthesis};
static const std::vector<Family> kAllFamilies{Family::LstmVae, Family::TanoWgan, Family::FedswTsad,
                                              Family::TanoDdpm};

// ---- config serialisation ------------------------------------------------

void to_json(json& j, const FederationConfig& c) {
    j = json{{"rounds", c.rounds},
             {"epochs", c.epochs},
             {"lr", c.lr},
             {"batch", c.batch},
             {"early_stop", c.early_stop},
             {"early_stop_rel", c.early_stop_rel},
             {"early_stop_patience", c.early_stop_patience},
             {"bandwidth_bps", c.bandwidth_bps}};
}

void from_json(const json& j, FederationConfig& c) {
    FederationConfig d;
    c.rounds = j.value("rounds", d.rounds);
    c.epochs = j.value("epochs", d.epochs);
    c.lr = j.value("lr", d.lr);
    c.batch = j.value("batch", d.batch);
    c.early_stop = j.value("early_stop", d.early_stop);
    c.early_stop_rel = j.value("early_stop_rel", d.early_stop_rel);
    c.early_stop_patience = j.value("early_stop_patience", d.early_stop_patience);
    c.bandwidth_bps = j.value("bandwidth_bps", d.bandwidth_bps);
}

void to_json(json& j, const DetectionConfig& c) {
    j = json{{"calibration_budget", c.calibration_budget}, {"m_consecutive", c.m_consecutive}};
}

void from_json(const json& j, DetectionConfig& c) {
    DetectionConfig d;
    c.calibration_budget = j.value("calibration_budget", d.calibration_budget);
    c.m_consecutive = j.value("m_consecutive", d.m_consecutive);
}

void to_json(json& j, const CostConfig& c) {
    j = json{{"c_early", c.c_early}, {"c_late", c.c_late}, {"normalizer", c.normalizer}};
}

void from_json(const json& j, CostConfig& c) {
    CostConfig d;
    c.c_early = j.value("c_early", d.c_early);
    c.c_late = j.value("c_late", d.c_late);
    c.normalizer = j.value("normalizer", d.normalizer);
}

// ---- schema check ---------------------------------------------------------

ConfigError::ConfigError(std::vector<std::string> ps)
    : std::runtime_error([&ps] {
          std::string msg = "invalid config:";
          for (const auto& p : ps) msg += "\n  - " + p;
          return msg;
      }()),
      problems(std::move(ps)) {}

static const char* type_word(const json& v) {
    if (v.is_object()) return "object";
    if (v.is_array()) return "array";
    if (v.is_string()) return "string";
    if (v.is_boolean()) return "boolean";
    if (v.is_number()) return "number";
    return "null";
}

static bool kind_ok(const json& user, const json& schema) {
    if (std::string(type_word(user)) != type_word(schema)) return false;
    // a float where the default is integral will not round-trip
    if (schema.is_number_integer() && user.is_number_float()) return false;
    return true;
}

static std::string expected_kind(const json& schema) {
    return schema.is_number_integer() ? "integer" : type_word(schema);
}

// report every unknown key / type mismatch under `prefix`; the schema is the
// fully-defaulted json of the section, so allowed keys and kinds track the
// serialisers automatically
static void walk_schema(const json& user, const json& schema, const std::string& prefix,
                        std::vector<std::string>& problems) {
    for (const auto& [k, v] : user.items()) {
        std::string path = prefix.empty() ? k : prefix + "." + k;
        if (!schema.contains(k)) {
            problems.push_back("unknown key: " + path);
            continue;
        }
        const json& s = schema.at(k);
        if (v.is_null()) {
            problems.push_back("null value: " + path);
            continue;
        }
        if (!kind_ok(v, s)) {
            problems.push_back("wrong type: " + path + " (expected " + expected_kind(s) +
                               ", got " + type_word(v) + ")");
            continue;
        }
        if (v.is_object()) {
            walk_schema(v, s, path, problems);
        } else if (v.is_array() && !s.empty()) {
            const json& elem = s.front();
            for (std::size_t i = 0; i < v.size(); ++i)
                if (!kind_ok(v.at(i), elem))
                    problems.push_back("wrong type: " + path + "[" + std::to_string(i) +
                                       "] (expected " + expected_kind(elem) + ")");
        }
    }
}

template <class T>
static T merged_section(const json& raw, const std::string& key) {
    json full;
    to_json(full, T{});
    if (raw.contains(key)) full.merge_patch(raw.at(key));
    return full.get<T>();
}

ExperimentConfig parse_config(const json& raw) {
    if (!raw.is_object()) throw ConfigError({"top level: expected an object"});
    std::vector<std::string> problems;
    ExperimentConfig cfg;

    // enum fields first; the model schema depends on the family
    bool family_ok = true;
    if (raw.contains("scenario")) {
        if (!raw.at("scenario").is_string()) {
            problems.push_back("wrong type: scenario (expected string)");
        } else {
            try {
                cfg.scenario = parse_scenario(raw.at("scenario").get<std::string>());
            } catch (const std::invalid_argument&) {
                problems.push_back(
                    "invalid value: scenario (expected one of centralized, independent, "
                    "fed_full, fed_analysis, fed_synthesis)");
            }
        }
    }
    if (raw.contains("model_family")) {
        if (!raw.at("model_family").is_string()) {
            problems.push_back("wrong type: model_family (expected string)");
            family_ok = false;
        } else {
            try {
                cfg.family = parse_family(raw.at("model_family").get<std::string>());
            } catch (const std::invalid_argument&) {
                problems.push_back(
                    "invalid value: model_family (expected one of lstm_vae, tano_wgan, "
                    "fedsw_tsad, tano_ddpm)");
                family_ok = false;
            }
        }
    }

    // scalar top-level keys, checked against their defaults
    json top{{"scenario", "fed_full"}, {"model_family", "lstm_vae"}, {"seed", 0},
             {"output_dir", "out"},    {"dataset_dir", ""},          {"window", 20},
             {"stride", 5}};
    for (const auto& [k, v] : raw.items()) {
        if (k == "dataset" || k == "model" || k == "federation" || k == "detection" ||
            k == "evaluation" || k == "matrix")
            continue;
        if (k == "scenario" || k == "model_family") continue;  // handled above
        if (!top.contains(k)) {
            problems.push_back("unknown key: " + k);
            continue;
        }
        if (v.is_null() || !kind_ok(v, top.at(k)))
            problems.push_back("wrong type: " + k + " (expected " + expected_kind(top.at(k)) +
                               ")");
    }

    json fed_schema, det_schema, cost_schema, fleet_schema, swat_schema;
    to_json(fed_schema, FederationConfig{});
    to_json(det_schema, DetectionConfig{});
    to_json(cost_schema, CostConfig{});
    to_json(fleet_schema, FleetConfig{});
    to_json(swat_schema, SwatPartitionConfig{});
    if (raw.contains("federation") && raw.at("federation").is_object())
        walk_schema(raw.at("federation"), fed_schema, "federation", problems);
    else if (raw.contains("federation"))
        problems.push_back("wrong type: federation (expected object)");
    if (raw.contains("detection") && raw.at("detection").is_object())
        walk_schema(raw.at("detection"), det_schema, "detection", problems);
    else if (raw.contains("detection"))
        problems.push_back("wrong type: detection (expected object)");
    if (raw.contains("evaluation") && raw.at("evaluation").is_object())
        walk_schema(raw.at("evaluation"), cost_schema, "evaluation", problems);
    else if (raw.contains("evaluation"))
        problems.push_back("wrong type: evaluation (expected object)");

    // dataset: exactly one of synthetic | swat
    if (raw.contains("dataset")) {
        const json& ds = raw.at("dataset");
        if (!ds.is_object()) {
            problems.push_back("wrong type: dataset (expected object)");
        } else {
            for (const auto& [k, v] : ds.items()) {
                if (k == "synthetic") {
                    if (v.is_object())
                        walk_schema(v, fleet_schema, "dataset.synthetic", problems);
                    else
                        problems.push_back("wrong type: dataset.synthetic (expected object)");
                } else if (k == "swat") {
                    if (v.is_object())
                        walk_schema(v, swat_schema, "dataset.swat", problems);
                    else
                        problems.push_back("wrong type: dataset.swat (expected object)");
                } else {
                    problems.push_back("unknown key: dataset." + k);
                }
            }
            if (ds.contains("synthetic") && ds.contains("swat"))
                problems.push_back("dataset: give either synthetic or swat, not both");
        }
    }

    // model section against the family defaults
    if (raw.contains("model")) {
        if (!raw.at("model").is_object())
            problems.push_back("wrong type: model (expected object)");
        else if (family_ok)
            walk_schema(raw.at("model"), default_model_config(cfg.family), "model", problems);
    }

    // run-all matrix
    if (raw.contains("matrix")) {
        const json& m = raw.at("matrix");
        if (!m.is_object()) {
            problems.push_back("wrong type: matrix (expected object)");
        } else {
            for (const auto& [k, v] : m.items()) {
                if (k != "scenarios" && k != "families") {
                    problems.push_back("unknown key: matrix." + k);
                    continue;
                }
                if (!v.is_array()) {
                    problems.push_back("wrong type: matrix." + k + " (expected array)");
                    continue;
                }
                if (v.empty()) problems.push_back("matrix." + k + ": must not be empty");
                for (std::size_t i = 0; i < v.size(); ++i) {
                    std::string path = "matrix." + k + "[" + std::to_string(i) + "]";
                    if (!v.at(i).is_string()) {
                        problems.push_back("wrong type: " + path + " (expected string)");
                        continue;
                    }
                    try {
                        if (k == "scenarios")
                            cfg.matrix_scenarios.push_back(
                                parse_scenario(v.at(i).get<std::string>()));
                        else
                            cfg.matrix_families.push_back(parse_family(v.at(i).get<std::string>()));
                    } catch (const std::invalid_argument&) {
                        problems.push_back("invalid value: " + path);
                    }
                }
            }
        }
    }
    if (!problems.empty()) throw ConfigError(std::move(problems));

    // assemble (types are now known to be safe)
    cfg.seed = raw.value("seed", std::uint64_t{0});
    cfg.output_dir = fs::path(raw.value("output_dir", std::string("out")));
    cfg.dataset_dir = fs::path(raw.value("dataset_dir", std::string()));
    cfg.window = raw.value("window", long{20});
    cfg.stride = raw.value("stride", long{5});
    cfg.synthetic = !(raw.contains("dataset") && raw.at("dataset").contains("swat"));
    if (raw.contains("dataset") && raw.at("dataset").contains("synthetic")) {
        json full = fleet_schema;
        full.merge_patch(raw.at("dataset").at("synthetic"));
        cfg.fleet = full.get<FleetConfig>();
    }
    if (!cfg.synthetic) {
        json full = swat_schema;
        full.merge_patch(raw.at("dataset").at("swat"));
        cfg.swat = full.get<SwatPartitionConfig>();
    }
    cfg.model = default_model_config(cfg.family);
    if (raw.contains("model")) cfg.model.merge_patch(raw.at("model"));
    cfg.federation = merged_section<FederationConfig>(raw, "federation");
    cfg.detection = merged_section<DetectionConfig>(raw, "detection");
    cfg.evaluation = merged_section<CostConfig>(raw, "evaluation");
    if (cfg.matrix_scenarios.empty()) cfg.matrix_scenarios = kAllScenarios;
    if (cfg.matrix_families.empty()) cfg.matrix_families = kAllFamilies;

    // domain checks, again all at once
    auto need = [&problems](bool ok, const std::string& what) {
        if (!ok) problems.push_back(what);
    };
    need(cfg.window >= 2, "window: must be >= 2");
    need(cfg.stride >= 1, "stride: must be >= 1");
    need(cfg.federation.rounds >= 1, "federation.rounds: must be >= 1");
    need(cfg.federation.epochs >= 1, "federation.epochs: must be >= 1");
    need(cfg.federation.batch >= 1, "federation.batch: must be >= 1");
    need(cfg.federation.lr > 0, "federation.lr: must be > 0");
    need(cfg.federation.bandwidth_bps > 0, "federation.bandwidth_bps: must be > 0");
    need(cfg.federation.early_stop_patience >= 1, "federation.early_stop_patience: must be >= 1");
    need(cfg.detection.calibration_budget >= 1, "detection.calibration_budget: must be >= 1");
    need(cfg.detection.m_consecutive >= 1, "detection.m_consecutive: must be >= 1");
    need(cfg.evaluation.c_early >= 0, "evaluation.c_early: must be >= 0");
    need(cfg.evaluation.c_late >= 0, "evaluation.c_late: must be >= 0");
    need(cfg.evaluation.normalizer >= 0, "evaluation.normalizer: must be >= 0");
    if (cfg.synthetic) {
        need(cfg.fleet.C >= 1, "dataset.synthetic.C: must be >= 1");
        need(cfg.fleet.K >= 1, "dataset.synthetic.K: must be >= 1");
        need(cfg.fleet.T >= cfg.window, "dataset.synthetic.T: must be >= window");
        need(cfg.fleet.n_train >= 1, "dataset.synthetic.n_train: must be >= 1");
        need(cfg.fleet.n_val >= 1, "dataset.synthetic.n_val: must be >= 1");
        need(cfg.fleet.n_test >= 1, "dataset.synthetic.n_test: must be >= 1");
    } else {
        need(!cfg.swat.csv_path.empty(), "dataset.swat.csv_path: must be set");
        need(cfg.swat.C >= 1, "dataset.swat.C: must be >= 1");
    }
    if (!problems.empty()) throw ConfigError(std::move(problems));

    // the effective model geometry is derived, not free: window follows the
    // experiment, sensors follow the dataset (known up front for synthetic)
    cfg.model["window"] = cfg.window;
    if (cfg.synthetic) cfg.model["sensors"] = cfg.fleet.K;
    return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const IoError& e) {
        throw ConfigError({e.what()});
    }
    json raw;
    try {
        raw = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError({std::string("not valid json: ") + e.what()});
    }
    return parse_config(raw);
}

json config_json(const ExperimentConfig& cfg) {
    json j;
    j["scenario"] = scenario_name(cfg.scenario);
    j["model_family"] = family_name(cfg.family);
    j["seed"] = cfg.seed;
    j["window"] = cfg.window;
    j["stride"] = cfg.stride;
    if (cfg.synthetic)
        j["dataset"]["synthetic"] = cfg.fleet;
    else
        j["dataset"]["swat"] = cfg.swat;
    j["model"] = cfg.model;
    j["federation"] = cfg.federation;
    j["detection"] = cfg.detection;
    j["evaluation"] = cfg.evaluation;
    return j;
}

std::string config_hash(const ExperimentConfig& cfg) {
    std::string dump = config_json(cfg).dump();
    return hex64(fnv1a64(dump.data(), dump.size()));
}

fs::path dataset_dir(const ExperimentConfig& cfg) {
    return cfg.dataset_dir.empty() ? cfg.output_dir / "dataset" : cfg.dataset_dir;
}

// ---- shared stage plumbing -----------------------------------------------

static json meta_json(const ExperimentConfig& cfg) {
    return json{{"config_hash", config_hash(cfg)},
                {"seed", cfg.seed},
                {"scenario", scenario_name(cfg.scenario)},
                {"model_family", family_name(cfg.family)}};
}

// one manifest next to every stage's artifacts: canonical config + hash.
// pure function of the config, so stages may rewrite it freely.
static void write_experiment_manifest(const ExperimentConfig& cfg) {
    fs::create_directories(cfg.output_dir);
    json j{{"config", config_json(cfg)},
           {"config_hash", config_hash(cfg)},
           {"seed", cfg.seed}};
    write_text_file(cfg.output_dir / "experiment.json", j.dump(2) + "\n");
}

struct NormalizedData {
    std::map<int, ClientDataset> clients;  // all splits normalised
    long sensors = 0;
};

static NormalizedData load_normalized(const ExperimentConfig& cfg) {
    fs::path dir = dataset_dir(cfg);
    if (!fs::exists(dir / "dataset.json"))
        throw PrereqError("dataset not found at " + dir.string() +
                          "; run `fedgen generate-data` first");
    NormalizedData out;
    out.clients = read_dataset(dir);
    if (out.clients.empty()) throw IoError("dataset at " + dir.string() + " has no clients");
    for (auto& [cid, ds] : out.clients) {
        NormalizationStats stats = fit_normalization(ds.train);
        for (auto* split : {&ds.train, &ds.val, &ds.test})
            for (auto& run : *split) run = apply_normalization(run, stats);
        if (!ds.train.empty()) out.sensors = ds.train.front().K();
    }
    return out;
}

static fs::path checkpoint_dir(const ExperimentConfig& cfg, int client_id) {
    if (cfg.scenario == Scenario::Centralized) return cfg.output_dir / "checkpoints" / "global";
    return cfg.output_dir / "checkpoints" / ("client_" + std::to_string(client_id));
}

static AnyModel load_client_model(const ExperimentConfig& cfg, int client_id) {
    fs::path dir = checkpoint_dir(cfg, client_id);
    if (!fs::exists(dir / "manifest.json"))
        throw PrereqError("checkpoint not found at " + dir.string() + "; run `fedgen train` first");
    return load_checkpoint(dir.string(), cfg.federation.lr);
}

static std::uint64_t scoring_seed(const ExperimentConfig& cfg) {
    return derive_seed(cfg.seed, 0x5c02e5ULL);
}

// ---- stages ---------------------------------------------------------------

void cmd_generate_data(const ExperimentConfig& cfg) {
    fs::path dir = dataset_dir(cfg);
    if (cfg.synthetic) {
        FleetConfig fc = cfg.fleet;
        // both the experiment seed and the fleet's own seed feed the stream
        fc.seed = derive_seed(cfg.seed, 0xda7aULL, cfg.fleet.seed);
        json echo = cfg.fleet;
        write_dataset(generate_fleet(fc), echo, fc.seed, dir);
    } else {
        json echo = cfg.swat;
        write_dataset(load_swat(cfg.swat), echo, cfg.seed, dir);
    }
    write_experiment_manifest(cfg);
}

void cmd_train(const ExperimentConfig& cfg) {
    NormalizedData data = load_normalized(cfg);

    json model_cfg = cfg.model;
    model_cfg["sensors"] = data.sensors;
    model_cfg["window"] = cfg.window;

    // window the training runs; one engine client per dataset client, or a
    // single pooled one for the centralized scenario
    bool pooled = cfg.scenario == Scenario::Centralized;
    std::vector<int> client_ids;
    for (const auto& [cid, ds] : data.clients) client_ids.push_back(cid);
    long n_nodes = pooled ? 1 : static_cast<long>(client_ids.size());

    std::vector<std::vector<SensorWindow>> owned(static_cast<std::size_t>(n_nodes));
    {
        std::size_t node = 0;
        for (const auto& [cid, ds] : data.clients) {
            for (const auto& run : ds.train) {
                auto ws = windowize(run, cfg.window, cfg.stride);
                auto& dst = owned[node];
                dst.insert(dst.end(), ws.begin(), ws.end());
            }
            if (!pooled) ++node;
        }
    }
    std::vector<ClientData> node_data(owned.size());
    for (std::size_t i = 0; i < owned.size(); ++i)
        for (const auto& w : owned[i]) node_data[i].windows.push_back(&w);

    // every node starts from the same initial parameters (the server's init)
    std::uint64_t init_seed = derive_seed(cfg.seed, 0x1417ULL);
    std::vector<AnyModel> models;
    models.reserve(owned.size());
    for (std::size_t i = 0; i < owned.size(); ++i)
        models.emplace_back(cfg.family, model_cfg, cfg.federation.lr, init_seed);

    FederationConfig fed = cfg.federation;
    fed.seed = derive_seed(cfg.seed, 0xfedeULL);
    auto logs = run_federation(models, node_data, engine_policy(cfg.scenario), fed);

    write_rounds_csv(cfg.output_dir / "rounds.csv", logs);
    for (std::size_t i = 0; i < models.size(); ++i) {
        int cid = pooled ? 0 : client_ids[i];
        save_checkpoint(checkpoint_dir(cfg, cid).string(), models[i], cfg.seed);
    }
    write_experiment_manifest(cfg);
}

void cmd_calibrate(const ExperimentConfig& cfg) {
    NormalizedData data = load_normalized(cfg);
    std::uint64_t seed_base = scoring_seed(cfg);

    json thresholds = json::object();
    std::optional<AnyModel> shared;  // centralized: one model for every client
    for (const auto& [cid, ds] : data.clients) {
        if (cfg.scenario != Scenario::Centralized)
            shared.reset();
        if (!shared) shared.emplace(load_client_model(cfg, cid));
        std::vector<ScoredRun> runs;
        runs.reserve(ds.val.size());
        for (const auto& run : ds.val) {
            ScoreSeries s =
                score_run(*shared, run, cfg.window, cfg.stride, seed_base);
            write_score_csv(cfg.output_dir / "scores" / "val" / (run.run_id + ".csv"), s);
            runs.push_back(ScoredRun{std::move(s), run.tau, run.t_life});
        }
        Threshold t = calibrate_threshold(runs, cfg.detection.calibration_budget,
                                          cfg.detection.m_consecutive, cid);
        thresholds[std::to_string(cid)] = {{"epsilon", t.epsilon},
                                           {"objective", t.objective},
                                           {"evaluations", t.evaluations}};
    }
    json out{{"meta", meta_json(cfg)}, {"thresholds", thresholds}};
    write_text_file(cfg.output_dir / "thresholds.json", out.dump(2) + "\n");
    write_experiment_manifest(cfg);
}

void cmd_evaluate(const ExperimentConfig& cfg) {
    NormalizedData data = load_normalized(cfg);
    fs::path th_path = cfg.output_dir / "thresholds.json";
    if (!fs::exists(th_path))
        throw PrereqError("thresholds.json not found in " + cfg.output_dir.string() +
                          "; run `fedgen calibrate` first");
    json th = json::parse(read_text_file(th_path));
    std::uint64_t seed_base = scoring_seed(cfg);

    std::vector<RunOutcome> all_outcomes;
    std::vector<ClientMetrics> per_client;
    json clients = json::object();
    std::optional<AnyModel> shared;
    for (const auto& [cid, ds] : data.clients) {
        std::string key = std::to_string(cid);
        if (!th.at("thresholds").contains(key))
            throw PrereqError("thresholds.json has no entry for client " + key +
                              "; run `fedgen calibrate` first");
        double eps = th.at("thresholds").at(key).at("epsilon").get<double>();
        if (cfg.scenario != Scenario::Centralized)
            shared.reset();
        if (!shared) shared.emplace(load_client_model(cfg, cid));

        std::vector<RunEval> evals;
        evals.reserve(ds.test.size());
        for (const auto& run : ds.test) {
            ScoreSeries s =
                score_run(*shared, run, cfg.window, cfg.stride, seed_base);
            write_score_csv(cfg.output_dir / "scores" / "test" / (run.run_id + ".csv"), s);
            auto tau_hat = predict_tau(s, eps, cfg.detection.m_consecutive);
            RunEval ev;
            ev.outcome = make_outcome(run.run_id, cid, run.tau, tau_hat, run.t_life);
            ev.truth = run.labels;
            ev.pred = labels_from_tau(tau_hat, run.L());
            ev.ts_scores = per_timestep_scores(s, run.L());
            all_outcomes.push_back(ev.outcome);
            evals.push_back(std::move(ev));
        }
        ClientMetrics cm = client_metrics(evals, cfg.evaluation);
        per_client.push_back(cm);
        clients[key] = {{"precision", cm.precision}, {"recall", cm.recall},
                        {"f1", cm.f1},               {"pr_auc", cm.pr_auc},
                        {"cost", cm.cost},           {"dt_fp", cm.dt_fp},
                        {"dt_fn", cm.dt_fn}};
    }
    ClientMetrics mac = macro_average(per_client);
    json out{{"meta", meta_json(cfg)},
             {"clients", clients},
             {"macro",
              {{"precision", mac.precision},
               {"recall", mac.recall},
               {"f1", mac.f1},
               {"pr_auc", mac.pr_auc},
               {"cost", mac.cost},
               {"dt_fp", mac.dt_fp},
               {"dt_fn", mac.dt_fn}}}};
    write_text_file(cfg.output_dir / "metrics.json", out.dump(2) + "\n");
    write_offsets_csv(cfg.output_dir / "offsets.csv", all_outcomes);
    write_experiment_manifest(cfg);
}

void cmd_comm_report(const ExperimentConfig& cfg) {
    long clients = cfg.synthetic ? cfg.fleet.C : cfg.swat.C;
    std::string csv =
        "family,policy,p_share,down_mb_round,up_mb_round,round_mb,total_gb,t_round_s\n";
    for (Family fam : kAllFamilies) {
        json model_cfg = fam == cfg.family ? cfg.model : default_model_config(fam);
        model_cfg["window"] = cfg.window;
        if (cfg.synthetic) model_cfg["sensors"] = cfg.fleet.K;
        AnyModel model(fam, model_cfg, cfg.federation.lr, 0);
        auto part = model.partition();
        for (SharePolicy pol : {SharePolicy::Full, SharePolicy::AnalysisOnly,
                                SharePolicy::SynthesisOnly, SharePolicy::Independent}) {
            long long p = count_params(model.params(), part, pol);
            CommCost c = comm_cost(p, cfg.federation.rounds, clients,
                                   cfg.federation.bandwidth_bps);
            csv += family_name(fam) + "," + policy_name(pol) + "," + std::to_string(p) + "," +
                   num_str(4.0 * static_cast<double>(p) / 1e6) + "," +
                   num_str(4.0 * static_cast<double>(p) / 1e6) + "," +
                   num_str(static_cast<double>(c.v_round_bytes) / 1e6) + "," +
                   num_str(static_cast<double>(c.v_total_bytes) / 1e9) + "," +
                   num_str(c.t_comm_round_s) + "\n";
        }
    }
    fs::create_directories(cfg.output_dir);
    write_text_file(cfg.output_dir / "comm.csv", csv);
    write_experiment_manifest(cfg);
}

void cmd_run_all(const ExperimentConfig& cfg) {
    fs::path dir = dataset_dir(cfg);
    if (!fs::exists(dir / "dataset.json")) cmd_generate_data(cfg);

    std::string matrix_csv = "scenario,family,precision,recall,f1,pr_auc,cost,dt_fp,dt_fn\n";
    for (Scenario sc : cfg.matrix_scenarios) {
        for (Family fam : cfg.matrix_families) {
            ExperimentConfig cell = cfg;
            cell.scenario = sc;
            cell.family = fam;
            cell.model = fam == cfg.family ? cfg.model : default_model_config(fam);
            cell.model["window"] = cell.window;
            if (cell.synthetic) cell.model["sensors"] = cell.fleet.K;
            cell.output_dir =
                cfg.output_dir / (scenario_name(sc) + "_" + family_name(fam));
            cell.dataset_dir = dir;
            cmd_train(cell);
            cmd_calibrate(cell);
            cmd_evaluate(cell);

            json m = json::parse(read_text_file(cell.output_dir / "metrics.json"));
            const json& mac = m.at("macro");
            matrix_csv += scenario_name(sc) + "," + family_name(fam);
            for (const char* k : {"precision", "recall", "f1", "pr_auc", "cost", "dt_fp", "dt_fn"})
                matrix_csv += "," + num_str(mac.at(k).get<double>());
            matrix_csv += "\n";
        }
    }
    write_text_file(cfg.output_dir / "matrix.csv", matrix_csv);
    write_experiment_manifest(cfg);
}

}  // namespace fedgen
