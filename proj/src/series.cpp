#include "fedgen/series.hpp"

#include <nlohmann/json.hpp>

#include "fedgen/io_util.hpp"

namespace fedgen {

using nlohmann::json;

std::vector<long> window_starts(long L, long size, long stride) {
    if (size <= 0 || stride <= 0) throw SeriesError("window size/stride must be positive");
    if (L < size) throw SeriesError("run too short");
    std::vector<long> starts;
    for (long s = 0; s + size <= L; s += stride) starts.push_back(s);
    long tail = L - size;
    if (starts.empty() || starts.back() != tail) starts.push_back(tail);
    return starts;
}

std::vector<SensorWindow> windowize(const RunRecord& run, long size, long stride) {
    auto starts = window_starts(run.L(), size, stride);
    std::vector<SensorWindow> out;
    out.reserve(starts.size());
    for (long s : starts) {
        SensorWindow w;
        w.data = run.sensors.middleCols(s, size);
        w.start_t = s;
        w.run_id = run.run_id;
        out.push_back(std::move(w));
    }
    return out;
}

NormalizationStats fit_normalization(const std::vector<RunRecord>& train_runs) {
    if (train_runs.empty()) throw SeriesError("fit_normalization: empty training set");
    long K = train_runs.front().K();
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(K);
    Eigen::VectorXd sumsq = Eigen::VectorXd::Zero(K);
    double n = 0;
    for (const auto& r : train_runs) {
        if (r.K() != K) throw SeriesError("fit_normalization: sensor count mismatch");
        sum += r.sensors.rowwise().sum();
        sumsq += r.sensors.array().square().matrix().rowwise().sum();
        n += static_cast<double>(r.L());
    }
    NormalizationStats st;
    st.mean = sum / n;
    st.std = ((sumsq.array() / n) - st.mean.array().square()).max(0.0).sqrt();
    st.std = st.std.array().max(1e-8);
    return st;
}

RunRecord apply_normalization(const RunRecord& run, const NormalizationStats& stats) {
    RunRecord out = run;
    out.sensors = (run.sensors.colwise() - stats.mean).array().colwise() / stats.std.array();
    return out;
}

RunRecord invert_normalization(const RunRecord& run, const NormalizationStats& stats) {
    RunRecord out = run;
    out.sensors = (run.sensors.array().colwise() * stats.std.array()).colwise() + stats.mean.array();
    return out;
}

std::vector<std::uint8_t> labels_from_tau(std::optional<long> tau, long L) {
    std::vector<std::uint8_t> y(static_cast<std::size_t>(L), 0);
    if (tau) {
        for (long t = *tau; t < L; ++t)
            if (t >= 0) y[static_cast<std::size_t>(t)] = 1;
    }
    return y;
}

bool labels_consistent(const RunRecord& run) {
    return run.labels == labels_from_tau(run.tau, run.L());
}

void save_run(const RunRecord& run, const fs::path& dir) {
    fs::create_directories(dir);
    std::string csv;
    csv.reserve(static_cast<std::size_t>(run.L()) * 12 * static_cast<std::size_t>(run.K() + 2));
    csv += "t";
    for (long k = 0; k < run.K(); ++k) csv += ",s" + std::to_string(k + 1);
    csv += ",label\n";
    for (long t = 0; t < run.L(); ++t) {
        csv += std::to_string(t);
        for (long k = 0; k < run.K(); ++k) {
            csv += ',';
            csv += num_str(run.sensors(k, t));
        }
        csv += ',';
        csv += run.labels[static_cast<std::size_t>(t)] ? '1' : '0';
        csv += '\n';
    }
    write_text_file(dir / (run.run_id + ".csv"), csv);

    json meta;
    meta["run_id"] = run.run_id;
    meta["client_id"] = run.client_id;
    if (run.tau)
        meta["tau"] = *run.tau;
    else
        meta["tau"] = nullptr;
    meta["t_life"] = run.t_life;
    write_text_file(dir / (run.run_id + ".json"), meta.dump(2) + "\n");
}

RunRecord load_run(const fs::path& dir, const std::string& run_id) {
    auto rows = read_csv(dir / (run_id + ".csv"));
    if (rows.size() < 2) throw SeriesError("run csv empty: " + run_id);
    long K = static_cast<long>(rows[0].size()) - 2;
    if (K <= 0) throw SeriesError("run csv malformed: " + run_id);
    long L = static_cast<long>(rows.size()) - 1;
    RunRecord run;
    run.sensors.resize(K, L);
    run.labels.resize(static_cast<std::size_t>(L));
    for (long t = 0; t < L; ++t) {
        const auto& r = rows[static_cast<std::size_t>(t + 1)];
        if (static_cast<long>(r.size()) != K + 2)
            throw SeriesError("run csv ragged row: " + run_id);
        for (long k = 0; k < K; ++k)
            run.sensors(k, t) = std::stod(r[static_cast<std::size_t>(k + 1)]);
        run.labels[static_cast<std::size_t>(t)] = r.back() == "1" ? 1 : 0;
    }
    json meta = json::parse(read_text_file(dir / (run_id + ".json")));
    run.run_id = meta.at("run_id").get<std::string>();
    run.client_id = meta.at("client_id").get<int>();
    if (!meta.at("tau").is_null()) run.tau = meta.at("tau").get<long>();
    run.t_life = meta.at("t_life").get<long>();
    return run;
}

}  // namespace fedgen
