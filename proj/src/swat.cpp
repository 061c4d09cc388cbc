#include "fedgen/swat.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <nlohmann/json.hpp>
#include <numeric>

#include "fedgen/io_util.hpp"

namespace fedgen {

using nlohmann::json;

namespace {

std::string canon(std::string s) {
    std::string out;
    for (char ch : s)
        if (!std::isspace(static_cast<unsigned char>(ch)))
            out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    return out;
}

// SWaT exports label values like "Normal", "Attack" and the infamous "A ttack"
int parse_label(const std::string& raw) {
    std::string s = canon(raw);
    if (s == "0" || s == "normal" || s == "false") return 0;
    if (s == "1" || s == "attack" || s == "true") return 1;
    return -1;
}

bool parse_num(const std::string& s, double& out) {
    const char* b = s.data();
    const char* e = b + s.size();
    auto res = std::from_chars(b, e, out);
    return res.ec == std::errc() && res.ptr == e;
}

RunRecord slice_to_run(const MatD& sensors, const std::vector<std::uint8_t>& labels, long lo,
                       long hi, int client, const std::string& run_id) {
    long L = hi - lo;
    RunRecord run;
    run.sensors = sensors.middleCols(lo, L);
    run.labels.assign(labels.begin() + lo, labels.begin() + hi);
    for (long t = 0; t < L; ++t) {
        if (run.labels[static_cast<std::size_t>(t)]) {
            run.tau = t;
            break;
        }
    }
    run.t_life = L - 1;
    run.run_id = run_id;
    run.client_id = client;
    return run;
}

}  // namespace

std::map<int, ClientDataset> load_swat(const SwatPartitionConfig& cfg) {
    auto rows = read_csv(cfg.csv_path);
    if (rows.size() < 2) throw SeriesError("swat csv has no data rows");
    const auto& header = rows.front();
    long label_idx = -1, ts_idx = -1;
    for (long i = 0; i < static_cast<long>(header.size()); ++i) {
        if (canon(header[static_cast<std::size_t>(i)]) == canon(cfg.label_column)) label_idx = i;
        if (canon(header[static_cast<std::size_t>(i)]) == canon(cfg.timestamp_column)) ts_idx = i;
    }
    if (label_idx < 0) throw SeriesError("missing label column '" + cfg.label_column + "'");

    std::vector<long> sensor_cols;
    for (long i = 0; i < static_cast<long>(header.size()); ++i)
        if (i != label_idx && i != ts_idx) sensor_cols.push_back(i);
    if (sensor_cols.empty()) throw SeriesError("swat csv has no sensor columns");

    long n = static_cast<long>(rows.size()) - 1;
    std::vector<long> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 1L);
    if (ts_idx >= 0) {
        // numeric timestamps when they parse, otherwise lexicographic
        bool numeric = true;
        std::vector<double> ts(static_cast<std::size_t>(n));
        for (long i = 0; i < n && numeric; ++i)
            numeric = parse_num(rows[static_cast<std::size_t>(i + 1)][static_cast<std::size_t>(ts_idx)],
                                ts[static_cast<std::size_t>(i)]);
        std::stable_sort(order.begin(), order.end(), [&](long a, long b) {
            if (numeric)
                return ts[static_cast<std::size_t>(a - 1)] < ts[static_cast<std::size_t>(b - 1)];
            return rows[static_cast<std::size_t>(a)][static_cast<std::size_t>(ts_idx)] <
                   rows[static_cast<std::size_t>(b)][static_cast<std::size_t>(ts_idx)];
        });
    }

    long K = static_cast<long>(sensor_cols.size());
    MatD sensors(K, n);
    std::vector<std::uint8_t> labels(static_cast<std::size_t>(n));
    for (long t = 0; t < n; ++t) {
        const auto& row = rows[static_cast<std::size_t>(order[static_cast<std::size_t>(t)])];
        if (static_cast<long>(row.size()) != static_cast<long>(header.size()))
            throw SeriesError("swat csv ragged row " + std::to_string(t));
        int lab = parse_label(row[static_cast<std::size_t>(label_idx)]);
        if (lab < 0)
            throw SeriesError("non-binary label value '" + row[static_cast<std::size_t>(label_idx)] +
                              "' at row " + std::to_string(t));
        labels[static_cast<std::size_t>(t)] = static_cast<std::uint8_t>(lab);
        for (long k = 0; k < K; ++k) {
            double v;
            if (!parse_num(row[static_cast<std::size_t>(sensor_cols[static_cast<std::size_t>(k)])], v))
                throw SeriesError("non-numeric sensor value at row " + std::to_string(t));
            sensors(k, t) = v;
        }
    }

    long first_attack = -1;
    for (long t = 0; t < n; ++t)
        if (labels[static_cast<std::size_t>(t)]) {
            first_attack = t;
            break;
        }
    if (first_attack < 0) throw SeriesError("no anomalous portion");
    if (first_attack == 0) throw SeriesError("no normal portion before the first attack");

    long n_norm = first_attack;
    long n_anom = n - first_attack;
    std::map<int, ClientDataset> fleet;
    for (int c = 0; c < cfg.C; ++c) {
        ClientDataset ds;
        ds.client_id = c;
        long nlo = n_norm * c / cfg.C, nhi = n_norm * (c + 1) / cfg.C;
        long alo = first_attack + n_anom * c / cfg.C;
        long ahi = first_attack + n_anom * (c + 1) / cfg.C;
        long nval = static_cast<long>(static_cast<double>(ahi - alo) * cfg.val_fraction);
        std::string cid = std::to_string(c);
        ds.train.push_back(slice_to_run(sensors, labels, nlo, nhi, c, "c" + cid + "_train_000"));
        ds.val.push_back(slice_to_run(sensors, labels, alo, alo + nval, c, "c" + cid + "_val_000"));
        ds.test.push_back(slice_to_run(sensors, labels, alo + nval, ahi, c, "c" + cid + "_test_000"));
        fleet.emplace(c, std::move(ds));
    }
    return fleet;
}

void to_json(json& j, const SwatPartitionConfig& c) {
    j = json::object();
    j["csv_path"] = c.csv_path;
    j["C"] = c.C;
    j["window"] = c.window;
    j["stride"] = c.stride;
    j["val_fraction"] = c.val_fraction;
    j["label_column"] = c.label_column;
    j["timestamp_column"] = c.timestamp_column;
}

void from_json(const json& j, SwatPartitionConfig& c) {
    if (j.contains("csv_path")) c.csv_path = j.at("csv_path").get<std::string>();
    if (j.contains("C")) c.C = j.at("C").get<int>();
    if (j.contains("window")) c.window = j.at("window").get<long>();
    if (j.contains("stride")) c.stride = j.at("stride").get<long>();
    if (j.contains("val_fraction")) c.val_fraction = j.at("val_fraction").get<double>();
    if (j.contains("label_column")) c.label_column = j.at("label_column").get<std::string>();
    if (j.contains("timestamp_column"))
        c.timestamp_column = j.at("timestamp_column").get<std::string>();
}

}  // namespace fedgen
