#include <doctest.h>

#include <cmath>
#include <set>

#include "fedgen/io_util.hpp"
#include "fedgen/metrics.hpp"
#include "fedgen/rng.hpp"
#include "fedgen/series.hpp"

using namespace fedgen;

namespace {

// independent restatement of the offset rule for the randomized oracle
std::pair<double, double> offsets_oracle(std::optional<long> tau, std::optional<long> th,
                                         long t_life) {
    double fp = 0, fn = 0;
    if (th.has_value()) {
        long ref = tau.has_value() ? *tau : t_life;
        if (*th <= ref) fp = static_cast<double>(ref - *th);
        if (tau.has_value() && *th > *tau) fn = static_cast<double>(*th - *tau);
    } else if (tau.has_value()) {
        fn = static_cast<double>(t_life - *tau);
    }
    return {fp, fn};
}

std::optional<long> maybe_tau(Rng& rng, long t_life) {
    if (rng.uniform() < 0.3) return std::nullopt;
    return static_cast<long>(rng.index(static_cast<std::size_t>(t_life + 1)));
}

}  // namespace

TEST_CASE("time_offsets branch table") {
    CHECK(time_offsets(944, 900, 1000) == std::pair{44.0, 0.0});
    CHECK(time_offsets(std::nullopt, std::nullopt, 1000) == std::pair{0.0, 0.0});
    CHECK(time_offsets(500, std::nullopt, 1000) == std::pair{0.0, 500.0});
    CHECK(time_offsets(std::nullopt, 300, 1000) == std::pair{700.0, 0.0});
    CHECK(time_offsets(400, 450, 1000) == std::pair{0.0, 50.0});
    CHECK(time_offsets(400, 400, 1000) == std::pair{0.0, 0.0});
}

TEST_CASE("time_offsets randomized oracle, exclusivity and bounds") {
    Rng rng(71);
    for (int rep = 0; rep < 1000; ++rep) {
        long t_life = 100 + static_cast<long>(rng.index(900));
        auto tau = maybe_tau(rng, t_life);
        auto th = maybe_tau(rng, t_life);
        auto [fp, fn] = time_offsets(tau, th, t_life);
        auto [ofp, ofn] = offsets_oracle(tau, th, t_life);
        CHECK(fp == ofp);
        CHECK(fn == ofn);
        CHECK(fp * fn == 0.0);
        CHECK(fp >= 0.0);
        CHECK(fn >= 0.0);
        CHECK(fp <= static_cast<double>(t_life));
        CHECK(fn <= static_cast<double>(t_life));
    }
}

TEST_CASE("make_outcome carries the offsets") {
    auto o = make_outcome("r7", 2, 500, std::nullopt, 1000);
    CHECK(o.run_id == "r7");
    CHECK(o.client_id == 2);
    CHECK(o.dt_fp == 0.0);
    CHECK(o.dt_fn == 500.0);
}

TEST_CASE("point metrics: conventions and a known row") {
    std::vector<std::uint8_t> y{0, 0, 1, 1}, same{0, 0, 1, 1};
    auto perfect = point_metrics(y, same);
    CHECK(perfect.precision == 1.0);
    CHECK(perfect.recall == 1.0);
    CHECK(perfect.f1 == 1.0);

    std::vector<std::uint8_t> none{0, 0, 0, 0};
    auto silent = point_metrics(y, none);  // no positive predictions
    CHECK(silent.precision == 0.0);
    CHECK(silent.recall == 0.0);
    CHECK(silent.f1 == 0.0);
    auto empty = point_metrics(none, y);  // no true positives at all
    CHECK(empty.recall == 0.0);
    CHECK(empty.f1 == 0.0);

    // tp=20 fp=1 fn=1 -> p = r = 20/21 = 0.952..., and f1 equals both
    std::vector<std::uint8_t> truth, pred;
    for (int i = 0; i < 20; ++i) {
        truth.push_back(1);
        pred.push_back(1);
    }
    truth.push_back(0);
    pred.push_back(1);  // fp
    truth.push_back(1);
    pred.push_back(0);  // fn
    auto m = point_metrics(truth, pred);
    CHECK(m.precision == doctest::Approx(0.952).epsilon(1e-3));
    CHECK(m.f1 == m.precision);
    CHECK(m.f1 == m.recall);

    CHECK_THROWS_AS(point_metrics(y, {0, 1}), std::invalid_argument);
}

TEST_CASE("point metrics match a counting oracle on random labels") {
    Rng rng(72);
    for (int rep = 0; rep < 1000; ++rep) {
        std::vector<std::uint8_t> truth, pred;
        for (int i = 0; i < 200; ++i) {
            truth.push_back(rng.uniform() < 0.3 ? 1 : 0);
            pred.push_back(rng.uniform() < 0.4 ? 1 : 0);
        }
        long tp = 0, fp = 0, fn = 0;
        for (int i = 0; i < 200; ++i) {
            tp += (truth[i] == 1 && pred[i] == 1);
            fp += (truth[i] == 0 && pred[i] == 1);
            fn += (truth[i] == 1 && pred[i] == 0);
        }
        auto m = point_metrics(truth, pred);
        double p = tp + fp ? double(tp) / double(tp + fp) : 0.0;
        double r = tp + fn ? double(tp) / double(tp + fn) : 0.0;
        CHECK(m.precision == p);
        CHECK(m.recall == r);
        if (p + r > 0) CHECK(m.f1 == doctest::Approx(2 * p * r / (p + r)).epsilon(1e-12));
    }
}

TEST_CASE("pr_auc reference values") {
    // perfectly separable ranking
    CHECK(pr_auc({4, 3, 2, 1}, {1, 1, 0, 0}) == 1.0);
    // constant scores: single cut, precision = prevalence
    CHECK(pr_auc({2, 2, 2, 2}, {1, 0, 0, 1}) == doctest::Approx(0.5));
    CHECK(pr_auc({1, 2, 3}, {0, 0, 0}) == 0.0);  // no positives
    // hand-walked 4-point curve: 0.5*1 + 0.5*(2/3)
    CHECK(pr_auc({0.9, 0.8, 0.7, 0.6}, {1, 0, 1, 0}) == doctest::Approx(5.0 / 6.0));
    CHECK_THROWS_AS(pr_auc({1, 2}, {1}), std::invalid_argument);
}

TEST_CASE("pr_auc matches an exhaustive threshold sweep") {
    Rng rng(73);
    for (int rep = 0; rep < 300; ++rep) {
        std::vector<double> s;
        std::vector<std::uint8_t> y;
        bool any_pos = false;
        for (int i = 0; i < 20; ++i) {
            // coarse grid of score values so ties actually happen
            s.push_back(static_cast<double>(rng.index(8)));
            y.push_back(rng.uniform() < 0.4 ? 1 : 0);
            any_pos |= y.back() == 1;
        }
        if (!any_pos) y[0] = 1;

        long pos = 0;
        for (auto v : y) pos += v;
        std::set<double, std::greater<>> cuts(s.begin(), s.end());
        double area = 0, prev_r = 0;
        for (double cut : cuts) {
            long tp = 0, fp = 0;
            for (int i = 0; i < 20; ++i)
                if (s[static_cast<std::size_t>(i)] >= cut)
                    (y[static_cast<std::size_t>(i)] ? tp : fp) += 1;
            double r = double(tp) / double(pos);
            area += (r - prev_r) * (double(tp) / double(tp + fp));
            prev_r = r;
        }
        CHECK(pr_auc(s, y) == doctest::Approx(area).epsilon(1e-9));
    }
}

TEST_CASE("cost saturation and monotonicity") {
    CostConfig cfg;  // c_early 1, c_late 2, normalizer from t_life
    std::vector<RunOutcome> zero{make_outcome("a", 0, 100, 100, 500)};
    CHECK(cost(zero, cfg) == 0.0);

    // one run late by normalizer / c_late saturates at exactly 1
    cfg.normalizer = 400.0;
    std::vector<RunOutcome> sat{make_outcome("b", 0, 100, 300, 500)};
    CHECK(sat[0].dt_fn == 200.0);
    CHECK(cost(sat, cfg) == 1.0);

    // per-run t_life normalisation: late by half the life at c_late=2 -> 1
    cfg.normalizer = 0.0;
    std::vector<RunOutcome> half{make_outcome("c", 0, 0, 250, 500)};
    CHECK(cost(half, cfg) == 1.0);

    // growing either offset never lowers the cost
    cfg.normalizer = 1000.0;
    double prev = -1.0;
    for (long d = 0; d <= 600; d += 50) {
        std::vector<RunOutcome> o{make_outcome("d", 0, 600, 600 - d, 1000)};
        double c = cost(o, cfg);
        CHECK(c >= prev);
        prev = c;
    }
    prev = -1.0;
    for (long d = 0; d <= 400; d += 50) {
        std::vector<RunOutcome> o{make_outcome("e", 0, 100, 100 + d, 1000)};
        double c = cost(o, cfg);
        CHECK(c >= prev);
        prev = c;
    }
}

TEST_CASE("client metrics pool timestamps and average offsets") {
    RunEval r1;
    r1.outcome = make_outcome("r1", 0, 2, 3, 4);
    r1.truth = {0, 0, 1, 1, 1};
    r1.pred = {0, 0, 0, 1, 1};
    r1.ts_scores = {0.1, 0.2, 0.3, 0.9, 0.9};
    RunEval r2;
    r2.outcome = make_outcome("r2", 0, std::nullopt, std::nullopt, 4);
    r2.truth = {0, 0, 0, 0, 0};
    r2.pred = {0, 0, 0, 0, 0};
    r2.ts_scores = {0.1, 0.1, 0.1, 0.1, 0.1};

    CostConfig cfg;
    auto m = client_metrics({r1, r2}, cfg);
    // pooled counts: tp=2, fp=0, fn=1
    CHECK(m.precision == 1.0);
    CHECK(m.recall == doctest::Approx(2.0 / 3.0));
    CHECK(m.f1 == doctest::Approx(0.8));
    CHECK(m.dt_fp == 0.0);
    CHECK(m.dt_fn == 0.5);  // (1 + 0) / 2 runs
    CHECK(m.pr_auc ==
          pr_auc({0.1, 0.2, 0.3, 0.9, 0.9, 0.1, 0.1, 0.1, 0.1, 0.1},
                 {0, 0, 1, 1, 1, 0, 0, 0, 0, 0}));
    CHECK_THROWS_AS(client_metrics({}, cfg), std::invalid_argument);
}

TEST_CASE("macro average is the unweighted client mean") {
    ClientMetrics a;
    a.f1 = 0.8;
    a.precision = 0.7;
    ClientMetrics b;
    b.f1 = 0.9;
    b.precision = 0.5;
    auto m = macro_average({a, b});
    CHECK(m.f1 == doctest::Approx(0.85));
    CHECK(m.precision == doctest::Approx(0.6));
    auto swapped = macro_average({b, a});
    CHECK(swapped.f1 == m.f1);
    auto same = macro_average({a, a, a});
    CHECK(same.f1 == doctest::Approx(a.f1).epsilon(1e-15));
    CHECK(macro_average({}).f1 == 0.0);
}

TEST_CASE("offsets csv emission") {
    std::vector<RunOutcome> o{make_outcome("r1", 0, 944, 900, 1000),
                              make_outcome("r2", 1, std::nullopt, std::nullopt, 800)};
    auto p = fs::temp_directory_path() / "fedgen_offsets_test.csv";
    write_offsets_csv(p, o);
    CHECK(read_text_file(p) ==
          "run_id,client_id,tau,tau_hat,t_life,dt_fp,dt_fn\n"
          "r1,0,944,900,1000,44,0\n"
          "r2,1,,,800,0,0\n");
    fs::remove(p);
}
