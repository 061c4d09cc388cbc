#include <doctest.h>

#include <cstdlib>
#include <nlohmann/json.hpp>

#include "fedgen/federation.hpp"
#include "fedgen/io_util.hpp"
#include "fedgen/rng.hpp"

using namespace fedgen;
using nlohmann::json;

namespace {

json tiny_vae_cfg() {
    VaeConfig c;
    c.sensors = 3;
    c.window = 6;
    c.enc_sizes = {6, 5};
    c.latent = 3;
    c.dec_sizes = {5, 6};
    json j;
    to_json(j, c);
    return j;
}

// a small owned window pool plus the pointer view the engine takes
struct Pool {
    std::vector<SensorWindow> owned;
    ClientData view() const {
        ClientData d;
        for (const auto& w : owned) d.windows.push_back(&w);
        return d;
    }
};

Pool make_pool(long n, long K, long W, std::uint64_t seed) {
    Pool p;
    Rng rng(seed);
    for (long i = 0; i < n; ++i) {
        SensorWindow w;
        w.data = MatD(K, W);
        for (long r = 0; r < K; ++r)
            for (long c = 0; c < W; ++c) w.data(r, c) = rng.normal();
        w.start_t = i;
        w.run_id = "r" + std::to_string(i);
        p.owned.push_back(std::move(w));
    }
    return p;
}

// the documented client stream: (seed, client, round, epoch) shuffled passes
double manual_epochs(AnyModel& m, const ClientData& d, const FederationConfig& cfg, long round,
                     std::size_t client) {
    double sum = 0;
    long batches = 0;
    for (long e = 0; e < cfg.epochs; ++e) {
        Rng rng(derive_seed(cfg.seed, client, static_cast<std::uint64_t>(round),
                            static_cast<std::uint64_t>(e)));
        std::vector<std::size_t> order(d.windows.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(order);
        for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch)) {
            std::size_t take = std::min(static_cast<std::size_t>(cfg.batch), order.size() - at);
            std::vector<const SensorWindow*> batch;
            for (std::size_t i = 0; i < take; ++i) batch.push_back(d.windows[order[at + i]]);
            sum += m.train_batch(pack_windows<float>(batch), static_cast<long>(take), rng);
            ++batches;
        }
    }
    return sum / static_cast<double>(batches);
}

bool stores_equal(const ParamStoreF& a, const ParamStoreF& b) {
    if (a.entries.size() != b.entries.size()) return false;
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
        if (a.entries[i].name != b.entries[i].name) return false;
        if ((a.entries[i].value - b.entries[i].value).cwiseAbs().maxCoeff() != 0.0f)
            return false;
    }
    return true;
}

bool names_equal(const ParamStoreF& a, const ParamStoreF& b,
                 const std::vector<std::string>& names) {
    for (const auto& n : names)
        if ((a.value(a.find(n)) - b.value(b.find(n))).cwiseAbs().maxCoeff() != 0.0f)
            return false;
    return true;
}

}  // namespace

TEST_CASE("comm_cost reproduces the reference traffic numbers") {
    // lstm-vae full slice
    auto c = comm_cost(942956, 30, 5, 1e7);
    CHECK(c.n_tx_round == 2 * 942956);
    CHECK(c.v_round_bytes == 7543648);
    CHECK(std::abs(c.v_round_bytes / 1e6 - 7.54) < 0.01);
    CHECK(std::abs(c.v_total_bytes / 1e9 - 1.13) < 0.005);
    CHECK(std::abs(c.t_comm_round_s - 6.03) < 0.005);

    // fedsw analysis-only slice
    auto f = comm_cost(131201, 30, 5, 1e7);
    CHECK(std::abs(f.v_round_bytes / 2 / 1e6 - 0.5248) < 1e-4);  // per direction
    CHECK(std::abs(f.v_round_bytes / 1e6 - 1.05) < 0.005);
    CHECK(std::abs(f.t_comm_round_s - 0.84) < 0.005);

    auto z = comm_cost(0, 30, 5, 1e7);
    CHECK(z.n_tx_round == 0);
    CHECK(z.v_round_bytes == 0);
    CHECK(z.v_total_bytes == 0);
    CHECK(z.t_comm_round_s == 0.0);
}

TEST_CASE("aggregate_shared is the weighted mean") {
    ParamStoreF a, b;
    a.add("w", 1, 1);
    b.add("w", 1, 1);
    a.value(0)(0, 0) = 1.0f;
    b.value(0)(0, 0) = 3.0f;
    auto agg = aggregate_shared({&a, &b}, {"w"}, {1.0, 3.0});
    REQUIRE(agg.size() == 1);
    CHECK(agg[0](0, 0) == 2.5f);

    // idempotence: identical uploads stay exactly fixed
    b.value(0)(0, 0) = 1.0f;
    for (auto weights : {std::vector<double>{1, 1}, {1, 3}, {2, 5}}) {
        auto same = aggregate_shared({&a, &b}, {"w"}, weights);
        CHECK(same[0](0, 0) == 1.0f);
    }

    CHECK_THROWS_AS(aggregate_shared({}, {"w"}, {}), std::invalid_argument);
    CHECK_THROWS_AS(aggregate_shared({&a, &b}, {"w"}, {1.0}), std::invalid_argument);
}

TEST_CASE("randomized aggregation against brute force, private slices untouched") {
    Rng rng(402);
    for (int rep = 0; rep < 20; ++rep) {
        long C = 2 + static_cast<long>(rng.index(6));
        long rows = 1 + static_cast<long>(rng.index(9));
        long cols = 1 + static_cast<long>(rng.index(9));

        std::vector<ParamStoreF> stores(static_cast<std::size_t>(C));
        std::vector<double> weights;
        for (auto& st : stores) {
            st.add("shared.w", rows, cols);
            st.add("private.w", rows, cols);
            for (int e = 0; e < 2; ++e)
                for (long r = 0; r < rows; ++r)
                    for (long c = 0; c < cols; ++c)
                        st.value(e)(r, c) = static_cast<float>(rng.normal());
        }
        for (long c = 0; c < C; ++c) weights.push_back(1.0 + static_cast<double>(rng.index(20)));

        std::vector<const ParamStoreF*> views;
        std::vector<MatF> private_before;
        for (auto& st : stores) {
            views.push_back(&st);
            private_before.push_back(st.value(1));
        }
        auto agg = aggregate_shared(views, {"shared.w"}, weights);

        double wsum = 0;
        for (double w : weights) wsum += w;
        for (long r = 0; r < rows; ++r)
            for (long c = 0; c < cols; ++c) {
                double acc = 0;
                for (long k = 0; k < C; ++k)
                    acc += weights[static_cast<std::size_t>(k)] *
                           static_cast<double>(stores[static_cast<std::size_t>(k)].value(0)(r, c));
                double expect = acc / wsum;
                double got = static_cast<double>(agg[0](r, c));
                CHECK(std::abs(got - expect) / std::max(1e-9, std::abs(expect)) < 1e-6);
            }
        for (long c = 0; c < C; ++c)
            CHECK((stores[static_cast<std::size_t>(c)].value(1) -
                   private_before[static_cast<std::size_t>(c)])
                      .cwiseAbs()
                      .maxCoeff() == 0.0f);
    }
}

TEST_CASE("overwrite_shared writes only the named entries") {
    ParamStoreF st;
    st.add("a.w", 2, 2);
    st.add("b.w", 2, 2);
    st.value(0).setConstant(1.0f);
    st.value(1).setConstant(2.0f);
    MatF repl(2, 2);
    repl.setConstant(9.0f);
    overwrite_shared(st, {"a.w"}, {repl});
    CHECK(st.value(0)(1, 1) == 9.0f);
    CHECK(st.value(1)(1, 1) == 2.0f);

    MatF bad(1, 2);
    CHECK_THROWS_AS(overwrite_shared(st, {"a.w"}, {bad}), std::invalid_argument);
}

TEST_CASE("full-policy round equals hand-rolled fedavg bit for bit") {
    FederationConfig cfg;
    cfg.rounds = 1;
    cfg.epochs = 1;
    cfg.lr = 1e-3;
    cfg.batch = 4;
    cfg.seed = 99;

    auto cfg_json = tiny_vae_cfg();
    std::vector<AnyModel> fed;
    fed.emplace_back(Family::LstmVae, cfg_json, cfg.lr, 7);
    fed.emplace_back(Family::LstmVae, cfg_json, cfg.lr, 7);
    std::vector<AnyModel> manual;
    manual.emplace_back(Family::LstmVae, cfg_json, cfg.lr, 7);
    manual.emplace_back(Family::LstmVae, cfg_json, cfg.lr, 7);

    auto p0 = make_pool(5, 3, 6, 1);
    auto p1 = make_pool(9, 3, 6, 2);
    std::vector<ClientData> data{p0.view(), p1.view()};

    auto logs = run_federation(fed, data, SharePolicy::Full, cfg);
    REQUIRE(logs.size() == 1);

    // replicate: local training with the documented streams, then the
    // weighted mean with |D_c| weights
    double l0 = manual_epochs(manual[0], data[0], cfg, 0, 0);
    double l1 = manual_epochs(manual[1], data[1], cfg, 0, 1);
    CHECK(logs[0].client_losses[0] == l0);
    CHECK(logs[0].client_losses[1] == l1);

    auto names = shared_names(manual[0].partition(), SharePolicy::Full);
    auto global = aggregate_shared({&manual[0].params(), &manual[1].params()}, names, {5.0, 9.0});
    for (auto& m : manual) overwrite_shared(m.params(), names, global);
    CHECK(stores_equal(fed[0].params(), manual[0].params()));
    CHECK(stores_equal(fed[1].params(), manual[1].params()));
    CHECK(logs[0].p_share == count_named(fed[0].params(), names));
}

TEST_CASE("independent policy is plain local training with zero traffic") {
    FederationConfig cfg;
    cfg.rounds = 2;
    cfg.epochs = 2;
    cfg.lr = 1e-3;
    cfg.batch = 3;
    cfg.seed = 55;

    auto cfg_json = tiny_vae_cfg();
    std::vector<AnyModel> fed;
    fed.emplace_back(Family::LstmVae, cfg_json, cfg.lr, 21);
    std::vector<AnyModel> manual;
    manual.emplace_back(Family::LstmVae, cfg_json, cfg.lr, 21);

    auto pool = make_pool(7, 3, 6, 3);
    std::vector<ClientData> data{pool.view()};
    auto logs = run_federation(fed, data, SharePolicy::Independent, cfg);

    REQUIRE(logs.size() == 2);
    for (const auto& log : logs) {
        CHECK(log.p_share == 0);
        CHECK(log.bytes_down_per_client == 0);
        CHECK(log.bytes_up_per_client == 0);
        CHECK(log.cum_bytes == 0);
        CHECK(log.comm_s == 0.0);
        CHECK(log.checksum == 0);
    }
    for (long r = 0; r < cfg.rounds; ++r) {
        double l = manual_epochs(manual[0], data[0], cfg, r, 0);
        CHECK(logs[static_cast<std::size_t>(r)].client_losses[0] == l);
    }
    CHECK(stores_equal(fed[0].params(), manual[0].params()));
}

TEST_CASE("analysis-only sharing keeps synthesis slices private") {
    FederationConfig cfg;
    cfg.rounds = 2;
    cfg.epochs = 1;
    cfg.lr = 1e-3;
    cfg.batch = 4;
    cfg.seed = 31;

    auto cfg_json = tiny_vae_cfg();
    std::vector<AnyModel> fed;
    fed.emplace_back(Family::LstmVae, cfg_json, cfg.lr, 11);
    fed.emplace_back(Family::LstmVae, cfg_json, cfg.lr, 11);
    auto p0 = make_pool(6, 3, 6, 4);
    auto p1 = make_pool(6, 3, 6, 5);
    std::vector<ClientData> data{p0.view(), p1.view()};
    auto logs = run_federation(fed, data, SharePolicy::AnalysisOnly, cfg);

    auto part = fed[0].partition();
    // analysis converged to one shared slice; synthesis stayed per-client
    CHECK(names_equal(fed[0].params(), fed[1].params(), part.analysis));
    bool synth_differs = false;
    for (const auto& n : part.synthesis)
        if ((fed[0].params().value(fed[0].params().find(n)) -
             fed[1].params().value(fed[1].params().find(n)))
                .cwiseAbs()
                .maxCoeff() != 0.0f)
            synth_differs = true;
    CHECK(synth_differs);

    // byte counters track the analysis slice only
    long long p_analysis = count_named(fed[0].params(), part.analysis);
    for (const auto& log : logs) {
        CHECK(log.p_share == p_analysis);
        CHECK(log.bytes_down_per_client == 4 * p_analysis);
        CHECK(log.bytes_up_per_client == 4 * p_analysis);
    }
    CHECK(logs.back().cum_bytes == 8 * p_analysis * 2 * 2);  // clients * rounds
}

TEST_CASE("federation results do not depend on the thread budget") {
    FederationConfig cfg;
    cfg.rounds = 2;
    cfg.epochs = 1;
    cfg.lr = 1e-3;
    cfg.batch = 4;
    cfg.seed = 77;
    auto cfg_json = tiny_vae_cfg();

    auto run_with = [&](const char* threads) {
        setenv("FEDGEN_THREADS", threads, 1);
        std::vector<AnyModel> ms;
        ms.emplace_back(Family::LstmVae, cfg_json, cfg.lr, 1);
        ms.emplace_back(Family::LstmVae, cfg_json, cfg.lr, 1);
        ms.emplace_back(Family::LstmVae, cfg_json, cfg.lr, 1);
        auto p0 = make_pool(5, 3, 6, 6);
        auto p1 = make_pool(4, 3, 6, 7);
        auto p2 = make_pool(6, 3, 6, 8);
        std::vector<ClientData> data{p0.view(), p1.view(), p2.view()};
        auto logs = run_federation(ms, data, SharePolicy::Full, cfg);
        unsetenv("FEDGEN_THREADS");
        return std::make_pair(std::move(ms), logs);
    };
    auto [m1, logs1] = run_with("1");
    auto [m3, logs3] = run_with("3");
    for (std::size_t c = 0; c < m1.size(); ++c) CHECK(stores_equal(m1[c].params(), m3[c].params()));
    REQUIRE(logs1.size() == logs3.size());
    for (std::size_t r = 0; r < logs1.size(); ++r) {
        CHECK(logs1[r].checksum == logs3[r].checksum);
        CHECK(logs1[r].client_losses == logs3[r].client_losses);
    }
}

TEST_CASE("run_federation input validation") {
    FederationConfig cfg;
    cfg.rounds = 1;
    cfg.epochs = 1;
    std::vector<AnyModel> none;
    std::vector<ClientData> no_data;
    CHECK_THROWS_AS(run_federation(none, no_data, SharePolicy::Full, cfg),
                    std::invalid_argument);

    auto cfg_json = tiny_vae_cfg();
    std::vector<AnyModel> ms;
    ms.emplace_back(Family::LstmVae, cfg_json, 1e-3, 1);
    std::vector<ClientData> empty_client{ClientData{}};
    CHECK_THROWS_AS(run_federation(ms, empty_client, SharePolicy::Full, cfg),
                    std::invalid_argument);

    // mixed families -> different shared names
    std::vector<AnyModel> mixed;
    mixed.emplace_back(Family::LstmVae, cfg_json, 1e-3, 1);
    WganConfig wc;
    wc.sensors = 3;
    wc.window = 6;
    wc.critic_sizes = {4, 3};
    wc.gen_sizes = {4, 3};
    wc.latent = 2;
    wc.inversion_steps = 5;
    json wj;
    to_json(wj, wc);
    mixed.emplace_back(Family::TanoWgan, wj, 1e-3, 1);
    auto pool = make_pool(4, 3, 6, 9);
    std::vector<ClientData> two{pool.view(), pool.view()};
    CHECK_THROWS_AS(run_federation(mixed, two, SharePolicy::Full, cfg), std::invalid_argument);
}

TEST_CASE("rounds csv is stable and carries the log columns") {
    RoundLog a;
    a.round = 0;
    a.client_losses = {1.5, 2.25};
    a.p_share = 10;
    a.bytes_down_per_client = 40;
    a.bytes_up_per_client = 40;
    a.cum_bytes = 160;
    a.comm_s = 6.4e-5;
    a.checksum = 0xdeadbeefULL;
    RoundLog b = a;
    b.round = 1;
    b.cum_bytes = 320;
    b.client_losses = {1.0, 2.0};

    auto p = fs::temp_directory_path() / "fedgen_rounds_test.csv";
    write_rounds_csv(p, {a, b});
    auto text = read_text_file(p);
    CHECK(text ==
          "round,p_share,bytes_down_per_client,bytes_up_per_client,cum_bytes,comm_s,checksum,"
          "loss_c0,loss_c1\n"
          "0,10,40,40,160,6.4e-05,00000000deadbeef,1.5,2.25\n"
          "1,10,40,40,320,6.4e-05,00000000deadbeef,1,2\n");
    fs::remove(p);
}

TEST_CASE("early stop honours the patience window") {
    FederationConfig cfg;
    cfg.rounds = 10;
    cfg.epochs = 1;
    cfg.lr = 1e-3;
    cfg.batch = 4;
    cfg.seed = 3;
    auto cfg_json = tiny_vae_cfg();
    auto pool = make_pool(4, 3, 6, 10);

    auto run_rounds = [&](bool stop, double rel) {
        cfg.early_stop = stop;
        cfg.early_stop_rel = rel;
        std::vector<AnyModel> ms;
        ms.emplace_back(Family::LstmVae, cfg_json, cfg.lr, 2);
        std::vector<ClientData> data{pool.view()};
        return run_federation(ms, data, SharePolicy::Full, cfg).size();
    };
    // threshold so loose every round counts as stalled: exactly patience+1 rounds
    CHECK(run_rounds(true, 1e18) == 4);
    // threshold no round can satisfy: the counter never advances
    CHECK(run_rounds(true, -1e18) == 10);
    // default off: always the full schedule
    CHECK(run_rounds(false, 1e18) == 10);
}
