#include "fedgen/fleet.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "fedgen/io_util.hpp"
#include "fedgen/rng.hpp"

namespace fedgen {

using nlohmann::json;

namespace {

void range_to_json(json& j, const char* key, const double (&r)[2]) {
    j[key] = {r[0], r[1]};
}

void range_from_json(const json& j, const char* key, double (&r)[2]) {
    if (j.contains(key)) {
        r[0] = j.at(key).at(0).get<double>();
        r[1] = j.at(key).at(1).get<double>();
    }
}

template <class T>
void get_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

struct ClientSignature {
    double drift, amp, period, phase;
    std::vector<double> gain, offset, psi, anom_gain;
};

ClientSignature draw_signature(const FleetConfig& cfg, Rng& rng) {
    ClientSignature s;
    s.drift = rng.uniform(cfg.drift_range[0], cfg.drift_range[1]);
    s.amp = rng.uniform(cfg.season_amp_range[0], cfg.season_amp_range[1]);
    s.period = rng.uniform(cfg.season_period_range[0], cfg.season_period_range[1]);
    s.phase = rng.uniform(cfg.season_phase_range[0], cfg.season_phase_range[1]);
    for (int k = 0; k < cfg.K; ++k) {
        double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        s.gain.push_back(sign * rng.uniform(cfg.sensor_gain_range[0], cfg.sensor_gain_range[1]));
        s.offset.push_back(rng.normal() * cfg.sensor_offset_std);
        s.psi.push_back(rng.uniform(0.0, 6.283185307179586));
        double asign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        s.anom_gain.push_back(asign *
                              rng.uniform(cfg.anomaly_gain_range[0], cfg.anomaly_gain_range[1]));
    }
    return s;
}

RunRecord make_run(const FleetConfig& cfg, const ClientSignature& sig, int client, bool degrade,
                   const std::string& run_id, Rng& rng) {
    const double two_pi = 6.283185307179586;
    // per-run jitter of the client signature
    double drift = sig.drift * (1.0 + rng.normal() * cfg.run_jitter_drift);
    double amp = sig.amp * (1.0 + rng.normal() * cfg.run_jitter_gain);
    double dphase = rng.normal() * cfg.run_jitter_phase;
    std::vector<double> gain(sig.gain), offset(sig.offset);
    for (int k = 0; k < cfg.K; ++k) {
        gain[static_cast<std::size_t>(k)] *= 1.0 + rng.normal() * cfg.run_jitter_gain;
        offset[static_cast<std::size_t>(k)] += rng.normal() * cfg.run_jitter_offset;
    }

    // latent degradation path over the full horizon
    std::optional<long> tau, t_fail;
    std::vector<double> D(static_cast<std::size_t>(cfg.T + 1), 0.0);
    if (degrade) {
        double w = 0.0;
        for (long t = 0; t <= cfg.T; ++t) {
            double d = drift * static_cast<double>(t) +
                       amp * std::sin(two_pi * static_cast<double>(t) / sig.period + sig.phase + dphase) +
                       w;
            D[static_cast<std::size_t>(t)] = d;
            if (!tau && d >= cfg.d_f) tau = t;
            if (!t_fail && d >= cfg.d_fail) t_fail = t;
            w += rng.normal() * cfg.brownian_std;
        }
    }
    long t_life = t_fail ? std::min(cfg.T, *t_fail) : cfg.T;
    long L = t_life + 1;
    if (tau && *tau > t_life) tau.reset();  // cannot happen (d_f < d_fail), kept as guard

    RunRecord run;
    run.sensors.resize(cfg.K, L);
    for (long t = 0; t < L; ++t) {
        bool anom = tau && t >= *tau;
        double excess = anom ? D[static_cast<std::size_t>(t)] - cfg.d_f : 0.0;
        double noise_scale = anom ? cfg.noise_std * cfg.anomaly_noise_factor : cfg.noise_std;
        for (int k = 0; k < cfg.K; ++k) {
            auto ku = static_cast<std::size_t>(k);
            double x = offset[ku] +
                       gain[ku] * std::sin(two_pi * static_cast<double>(t) / sig.period + sig.phase +
                                           dphase + sig.psi[ku]) +
                       rng.normal() * noise_scale;
            if (anom) x += sig.anom_gain[ku] * excess;
            run.sensors(k, t) = x;
        }
    }
    run.tau = tau;
    run.t_life = t_life;
    run.labels = labels_from_tau(tau, L);
    run.run_id = run_id;
    run.client_id = client;
    return run;
}

std::string make_id(int c, const char* split, int i) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "c%d_%s_%03d", c, split, i);
    return buf;
}

}  // namespace

std::map<int, ClientDataset> generate_fleet(const FleetConfig& cfg) {
    if (!(cfg.d_fail > cfg.d_f) || !(cfg.d_f > 0)) throw SeriesError("require d_fail > d_f > 0");
    std::map<int, ClientDataset> fleet;
    for (int c = 0; c < cfg.C; ++c) {
        // per spec'd convention: client streams derive from seed + c
        Rng rng(derive_seed(cfg.seed + static_cast<std::uint64_t>(c)));
        ClientSignature sig = draw_signature(cfg, rng);
        ClientDataset ds;
        ds.client_id = c;
        for (int i = 0; i < cfg.n_train; ++i)
            ds.train.push_back(make_run(cfg, sig, c, false, make_id(c, "train", i), rng));
        for (int i = 0; i < cfg.n_val; ++i)
            ds.val.push_back(make_run(cfg, sig, c, true, make_id(c, "val", i), rng));
        for (int i = 0; i < cfg.n_test; ++i)
            ds.test.push_back(make_run(cfg, sig, c, true, make_id(c, "test", i), rng));
        fleet.emplace(c, std::move(ds));
    }
    return fleet;
}

void to_json(json& j, const FleetConfig& c) {
    j = json::object();
    j["C"] = c.C;
    j["K"] = c.K;
    j["T"] = c.T;
    j["n_train"] = c.n_train;
    j["n_val"] = c.n_val;
    j["n_test"] = c.n_test;
    j["d_f"] = c.d_f;
    j["d_fail"] = c.d_fail;
    range_to_json(j, "drift_range", c.drift_range);
    range_to_json(j, "season_amp_range", c.season_amp_range);
    range_to_json(j, "season_period_range", c.season_period_range);
    range_to_json(j, "season_phase_range", c.season_phase_range);
    j["noise_std"] = c.noise_std;
    j["brownian_std"] = c.brownian_std;
    range_to_json(j, "sensor_gain_range", c.sensor_gain_range);
    j["sensor_offset_std"] = c.sensor_offset_std;
    range_to_json(j, "anomaly_gain_range", c.anomaly_gain_range);
    j["anomaly_noise_factor"] = c.anomaly_noise_factor;
    j["run_jitter_gain"] = c.run_jitter_gain;
    j["run_jitter_offset"] = c.run_jitter_offset;
    j["run_jitter_drift"] = c.run_jitter_drift;
    j["run_jitter_phase"] = c.run_jitter_phase;
    j["seed"] = c.seed;
}

void from_json(const json& j, FleetConfig& c) {
    get_if(j, "C", c.C);
    get_if(j, "K", c.K);
    get_if(j, "T", c.T);
    get_if(j, "n_train", c.n_train);
    get_if(j, "n_val", c.n_val);
    get_if(j, "n_test", c.n_test);
    get_if(j, "d_f", c.d_f);
    get_if(j, "d_fail", c.d_fail);
    range_from_json(j, "drift_range", c.drift_range);
    range_from_json(j, "season_amp_range", c.season_amp_range);
    range_from_json(j, "season_period_range", c.season_period_range);
    range_from_json(j, "season_phase_range", c.season_phase_range);
    get_if(j, "noise_std", c.noise_std);
    get_if(j, "brownian_std", c.brownian_std);
    range_from_json(j, "sensor_gain_range", c.sensor_gain_range);
    get_if(j, "sensor_offset_std", c.sensor_offset_std);
    range_from_json(j, "anomaly_gain_range", c.anomaly_gain_range);
    get_if(j, "anomaly_noise_factor", c.anomaly_noise_factor);
    get_if(j, "run_jitter_gain", c.run_jitter_gain);
    get_if(j, "run_jitter_offset", c.run_jitter_offset);
    get_if(j, "run_jitter_drift", c.run_jitter_drift);
    get_if(j, "run_jitter_phase", c.run_jitter_phase);
    get_if(j, "seed", c.seed);
}

void write_dataset(const std::map<int, ClientDataset>& fleet, const json& cfg_echo,
                   std::uint64_t seed, const fs::path& root) {
    fs::create_directories(root);
    json manifest;
    manifest["config"] = cfg_echo;
    manifest["seed"] = seed;
    json clients = json::object();
    for (const auto& [c, ds] : fleet) {
        fs::path cdir = root / ("client_" + std::to_string(c));
        json splits;
        auto dump_split = [&](const char* name, const std::vector<RunRecord>& runs) {
            json ids = json::array();
            json hashes = json::object();
            for (const auto& r : runs) {
                save_run(r, cdir);
                ids.push_back(r.run_id);
                auto bytes = read_text_file(cdir / (r.run_id + ".csv"));
                hashes[r.run_id] = hex64(fnv1a64(bytes.data(), bytes.size()));
            }
            splits[name] = ids;
            for (auto& [k, v] : hashes.items()) splits["hashes"][k] = v;
        };
        dump_split("train", ds.train);
        dump_split("val", ds.val);
        dump_split("test", ds.test);
        clients[std::to_string(c)] = splits;
    }
    manifest["clients"] = clients;
    write_text_file(root / "dataset.json", manifest.dump(2) + "\n");
}

std::map<int, ClientDataset> read_dataset(const fs::path& root) {
    json manifest = json::parse(read_text_file(root / "dataset.json"));
    std::map<int, ClientDataset> fleet;
    for (const auto& [ckey, splits] : manifest.at("clients").items()) {
        int c = std::stoi(ckey);
        fs::path cdir = root / ("client_" + ckey);
        ClientDataset ds;
        ds.client_id = c;
        for (const auto& id : splits.at("train")) ds.train.push_back(load_run(cdir, id.get<std::string>()));
        for (const auto& id : splits.at("val")) ds.val.push_back(load_run(cdir, id.get<std::string>()));
        for (const auto& id : splits.at("test")) ds.test.push_back(load_run(cdir, id.get<std::string>()));
        fleet.emplace(c, std::move(ds));
    }
    return fleet;
}

}  // namespace fedgen
