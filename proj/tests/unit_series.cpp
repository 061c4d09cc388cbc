#include <doctest.h>

#include <filesystem>

#include "fedgen/rng.hpp"
#include "fedgen/series.hpp"

using namespace fedgen;

namespace {
RunRecord make_random_run(long K, long L, std::optional<long> tau, std::uint64_t seed) {
    Rng rng(seed);
    RunRecord r;
    r.sensors.resize(K, L);
    for (long k = 0; k < K; ++k)
        for (long t = 0; t < L; ++t) r.sensors(k, t) = rng.normal();
    r.tau = tau;
    r.t_life = L - 1;
    r.labels = labels_from_tau(tau, L);
    r.run_id = "test_run";
    r.client_id = 0;
    return r;
}
}  // namespace

TEST_CASE("windowize grid and tail") {
    auto r = make_random_run(3, 1000, std::nullopt, 7);
    auto ws = windowize(r, 20, 5);
    CHECK(ws.size() == 197);
    CHECK(ws.front().start_t == 0);
    CHECK(ws[1].start_t == 5);
    CHECK(ws.back().start_t == 980);

    auto exact = windowize(make_random_run(2, 20, std::nullopt, 1), 20, 5);
    CHECK(exact.size() == 1);
    CHECK(exact[0].start_t == 0);

    auto tail = windowize(make_random_run(2, 23, std::nullopt, 2), 20, 5);
    CHECK(tail.size() == 2);
    CHECK(tail[0].start_t == 0);
    CHECK(tail[1].start_t == 3);

    CHECK_THROWS_WITH_AS(windowize(make_random_run(2, 10, std::nullopt, 3), 20, 5),
                         doctest::Contains("run too short"), SeriesError);
}

TEST_CASE("window content matches source and covers the run") {
    auto r = make_random_run(4, 53, std::nullopt, 11);
    auto ws = windowize(r, 20, 5);
    std::vector<int> covered(53, 0);
    for (const auto& w : ws) {
        CHECK(w.data.cols() == 20);
        CHECK(w.start_t + 20 <= r.L());
        for (long j = 0; j < 20; ++j) {
            covered[static_cast<std::size_t>(w.start_t + j)] = 1;
            for (long k = 0; k < 4; ++k) CHECK(w.data(k, j) == r.sensors(k, w.start_t + j));
        }
    }
    for (int c : covered) CHECK(c == 1);
}

TEST_CASE("normalization fit/apply/invert") {
    std::vector<RunRecord> train;
    for (int i = 0; i < 3; ++i) train.push_back(make_random_run(5, 200, std::nullopt, 100 + i));
    auto st = fit_normalization(train);

    // constant channel: mean kept, std floored
    auto degenerate = make_random_run(2, 50, std::nullopt, 5);
    degenerate.sensors.row(0).setConstant(5.0);
    auto st2 = fit_normalization({degenerate});
    CHECK(st2.mean(0) == doctest::Approx(5.0));
    CHECK(st2.std(0) == doctest::Approx(1e-8));

    // already standardized -> stats near (0, 1)
    auto z = apply_normalization(train[0], st);
    auto st3 = fit_normalization({z});
    for (long k = 0; k < 5; ++k) {
        CHECK(std::abs(st3.mean(k)) < 0.3);
        CHECK(st3.std(k) == doctest::Approx(1.0).epsilon(0.3));
    }

    // round trip
    auto back = invert_normalization(z, st);
    CHECK((back.sensors - train[0].sensors).cwiseAbs().maxCoeff() < 1e-10);

    CHECK_THROWS_AS(fit_normalization({}), SeriesError);
}

TEST_CASE("labels follow the persistent rule") {
    auto r = make_random_run(2, 100, 40, 21);
    CHECK(labels_consistent(r));
    CHECK(r.labels[39] == 0);
    CHECK(r.labels[40] == 1);
    CHECK(r.labels[99] == 1);
    auto h = make_random_run(2, 100, std::nullopt, 22);
    CHECK(labels_consistent(h));
    for (auto v : h.labels) CHECK(v == 0);
}

TEST_CASE("run csv/json round trip") {
    namespace fs = std::filesystem;
    auto dir = fs::temp_directory_path() / "fedgen_series_test";
    fs::remove_all(dir);
    auto r = make_random_run(4, 77, 30, 33);
    r.run_id = "c0_val_007";
    r.client_id = 3;
    save_run(r, dir);
    auto back = load_run(dir, r.run_id);
    CHECK(back.run_id == r.run_id);
    CHECK(back.client_id == 3);
    CHECK(back.tau == r.tau);
    CHECK(back.t_life == r.t_life);
    CHECK(back.labels == r.labels);
    CHECK((back.sensors - r.sensors).cwiseAbs().maxCoeff() < 1e-12);
    fs::remove_all(dir);
}
