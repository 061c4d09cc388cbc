#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>

#include "fedgen/fleet.hpp"
#include "fedgen/io_util.hpp"
#include "fedgen/swat.hpp"

using namespace fedgen;

namespace {
FleetConfig small_cfg() {
    FleetConfig cfg;
    cfg.C = 2;
    cfg.K = 3;
    cfg.T = 300;
    cfg.n_train = 2;
    cfg.n_val = 4;
    cfg.n_test = 4;
    cfg.seed = 42;
    return cfg;
}
}  // namespace

TEST_CASE("fleet generation invariants") {
    auto fleet = generate_fleet(small_cfg());
    CHECK(fleet.size() == 2);
    for (auto& [c, ds] : fleet) {
        CHECK(static_cast<int>(ds.train.size()) == 2);
        CHECK(static_cast<int>(ds.val.size()) == 4);
        for (const auto& r : ds.train) {
            CHECK(!r.tau.has_value());
            CHECK(r.t_life == 300);
            CHECK(r.L() == 301);
            for (auto v : r.labels) CHECK(v == 0);
        }
        for (const auto& r : ds.val) {
            CHECK(labels_consistent(r));
            CHECK(r.t_life <= 300);
            CHECK(r.L() == r.t_life + 1);
            if (r.tau) CHECK(*r.tau <= r.t_life);
        }
        for (const auto& r : ds.test) CHECK(labels_consistent(r));
    }
}

TEST_CASE("fleet determinism and client heterogeneity") {
    auto a = generate_fleet(small_cfg());
    auto b = generate_fleet(small_cfg());
    for (auto& [c, ds] : a) {
        CHECK((ds.val[0].sensors - b.at(c).val[0].sensors).cwiseAbs().maxCoeff() == 0.0);
        CHECK(ds.val[0].tau == b.at(c).val[0].tau);
    }
    // different clients differ
    CHECK((a.at(0).train[0].sensors - a.at(1).train[0].sensors).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("degradation disabled => no anomalies, full life") {
    auto cfg = small_cfg();
    cfg.drift_range[0] = cfg.drift_range[1] = 0.0;
    cfg.season_amp_range[0] = cfg.season_amp_range[1] = 0.0;
    cfg.brownian_std = 0.0;
    cfg.run_jitter_drift = 0.0;
    auto fleet = generate_fleet(cfg);
    for (auto& [c, ds] : fleet)
        for (const auto& r : ds.val) {
            CHECK(!r.tau.has_value());
            CHECK(r.t_life == cfg.T);
            for (auto v : r.labels) CHECK(v == 0);
        }
}

TEST_CASE("dataset write/read round trip") {
    namespace fs = std::filesystem;
    auto root = fs::temp_directory_path() / "fedgen_ds_test";
    fs::remove_all(root);
    auto cfg = small_cfg();
    auto fleet = generate_fleet(cfg);
    nlohmann::json echo;
    to_json(echo, cfg);
    write_dataset(fleet, echo, cfg.seed, root);
    CHECK(fs::exists(root / "dataset.json"));
    auto back = read_dataset(root);
    CHECK(back.size() == fleet.size());
    for (auto& [c, ds] : fleet) {
        CHECK(back.at(c).train.size() == ds.train.size());
        CHECK((back.at(c).val[1].sensors - ds.val[1].sensors).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(back.at(c).val[1].tau == ds.val[1].tau);
    }
    fs::remove_all(root);
}

namespace {
std::filesystem::path write_swat_fixture(int normal_rows, int attack_rows, bool shuffled = false) {
    namespace fs = std::filesystem;
    auto p = fs::temp_directory_path() / "fedgen_swat_fixture.csv";
    std::ofstream out(p);
    out << "ts,p1,p2,label\n";
    std::vector<int> order;
    for (int i = 0; i < normal_rows + attack_rows; ++i) order.push_back(i);
    if (shuffled) std::swap(order[0], order[normal_rows + attack_rows - 1]);
    for (int idx : order) {
        bool attack = idx >= normal_rows;
        out << idx << "," << (idx * 0.1) << "," << (attack ? 9.0 : 1.0) << ","
            << (attack ? "Attack" : "Normal") << "\n";
    }
    return p;
}
}  // namespace

TEST_CASE("swat partition arithmetic (100 normal / 50 attack, C=5)") {
    SwatPartitionConfig cfg;
    cfg.csv_path = write_swat_fixture(100, 50).string();
    cfg.label_column = "label";
    cfg.timestamp_column = "ts";
    auto fleet = load_swat(cfg);
    CHECK(fleet.size() == 5);
    for (auto& [c, ds] : fleet) {
        REQUIRE(ds.train.size() == 1);
        REQUIRE(ds.val.size() == 1);
        REQUIRE(ds.test.size() == 1);
        CHECK(ds.train[0].L() == 20);
        CHECK(ds.val[0].L() == 5);
        CHECK(ds.test[0].L() == 5);
        for (auto v : ds.train[0].labels) CHECK(v == 0);
        CHECK(ds.val[0].tau.has_value());
    }
}

TEST_CASE("swat splits are chronological and disjoint") {
    SwatPartitionConfig cfg;
    cfg.csv_path = write_swat_fixture(100, 50, true).string();  // first/last swapped
    cfg.timestamp_column = "ts";
    auto fleet = load_swat(cfg);
    // after re-sorting by timestamp, client 0 train starts at ts=0 => sensor p1=0.0
    CHECK(fleet.at(0).train[0].sensors(0, 0) == doctest::Approx(0.0));
    // last test row of last client is ts=149
    CHECK(fleet.at(4).test[0].sensors(0, 4) == doctest::Approx(14.9));
}

TEST_CASE("swat error cases") {
    namespace fs = std::filesystem;
    SwatPartitionConfig cfg;
    cfg.timestamp_column = "ts";

    auto all_normal = fs::temp_directory_path() / "fedgen_swat_normal.csv";
    {
        std::ofstream out(all_normal);
        out << "ts,p1,label\n";
        for (int i = 0; i < 30; ++i) out << i << ",1.0,Normal\n";
    }
    cfg.csv_path = all_normal.string();
    CHECK_THROWS_WITH_AS(load_swat(cfg), doctest::Contains("no anomalous portion"), SeriesError);

    auto bad_label = fs::temp_directory_path() / "fedgen_swat_bad.csv";
    {
        std::ofstream out(bad_label);
        out << "ts,p1,label\n0,1.0,Normal\n1,1.0,maybe\n";
    }
    cfg.csv_path = bad_label.string();
    CHECK_THROWS_WITH_AS(load_swat(cfg), doctest::Contains("non-binary label"), SeriesError);

    cfg.csv_path = write_swat_fixture(10, 10).string();
    cfg.label_column = "nope";
    CHECK_THROWS_WITH_AS(load_swat(cfg), doctest::Contains("missing label column"), SeriesError);
}
