#include "fedgen/scoring.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "fedgen/io_util.hpp"
#include "fedgen/rng.hpp"

namespace fedgen {

ScoreSeries score_run(const AnyModel& model, const RunRecord& run, long window, long stride,
                      std::uint64_t seed_base, long batch) {
    if (window < 1 || stride < 1 || batch < 1)
        throw std::invalid_argument("score_run: window, stride and batch must be >= 1");
    auto wins = windowize(run, window, stride);
    ScoreSeries out;
    out.run_id = run.run_id;
    out.scores.reserve(wins.size());
    out.start_ts.reserve(wins.size());

    std::uint64_t run_hash = fnv1a64(run.run_id.data(), run.run_id.size());
    std::uint64_t batch_idx = 0;
    for (std::size_t at = 0; at < wins.size(); at += static_cast<std::size_t>(batch), ++batch_idx) {
        std::size_t take = std::min(static_cast<std::size_t>(batch), wins.size() - at);
        std::vector<const SensorWindow*> ptrs;
        ptrs.reserve(take);
        for (std::size_t i = 0; i < take; ++i) ptrs.push_back(&wins[at + i]);
        auto packed = pack_windows<float>(ptrs);
        auto scores = model.score_batch(packed, static_cast<long>(take),
                                        derive_seed(seed_base, run_hash, batch_idx));
        for (std::size_t i = 0; i < take; ++i) {
            if (!std::isfinite(scores[i]))
                throw std::runtime_error("score_run: non-finite score in run " + run.run_id +
                                         " at window start " +
                                         std::to_string(wins[at + i].start_t));
            out.scores.push_back(scores[i]);
            out.start_ts.push_back(wins[at + i].start_t);
        }
    }
    return out;
}

std::optional<long> predict_tau(const ScoreSeries& s, double eps, long m_consecutive) {
    if (m_consecutive < 1) throw std::invalid_argument("predict_tau: m_consecutive must be >= 1");
    if (s.scores.size() != s.start_ts.size())
        throw std::invalid_argument("predict_tau: misaligned series");
    long streak = 0;
    for (std::size_t i = 0; i < s.scores.size(); ++i) {
        streak = s.scores[i] > eps ? streak + 1 : 0;
        if (streak >= m_consecutive)
            return s.start_ts[i - static_cast<std::size_t>(m_consecutive - 1)];
    }
    return std::nullopt;
}

std::vector<double> per_timestep_scores(const ScoreSeries& s, long L) {
    if (s.scores.empty()) throw std::invalid_argument("per_timestep_scores: empty series");
    std::vector<double> out(static_cast<std::size_t>(L));
    std::size_t w = 0;
    for (long t = 0; t < L; ++t) {
        while (w + 1 < s.start_ts.size() && s.start_ts[w + 1] <= t) ++w;
        out[static_cast<std::size_t>(t)] = s.scores[w];
    }
    return out;
}

void write_score_csv(const fs::path& path, const ScoreSeries& s) {
    std::ostringstream os;
    os << "start_t,score\n";
    for (std::size_t i = 0; i < s.scores.size(); ++i)
        os << s.start_ts[i] << ',' << num_str(s.scores[i]) << '\n';
    write_text_file(path, os.str());
}

ScoreSeries read_score_csv(const fs::path& path, const std::string& run_id) {
    auto rows = read_csv(path);
    if (rows.empty() || rows.front().size() != 2 || rows.front()[0] != "start_t")
        throw IoError("score csv " + path.string() + ": bad header");
    ScoreSeries s;
    s.run_id = run_id;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].size() != 2)
            throw IoError("score csv " + path.string() + ": bad row " + std::to_string(i));
        s.start_ts.push_back(std::stol(rows[i][0]));
        s.scores.push_back(std::stod(rows[i][1]));
    }
    return s;
}

}  // namespace fedgen
