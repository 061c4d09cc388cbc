#include "fedgen/federation.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <numeric>
#include <sstream>
#include <thread>

#include "fedgen/rng.hpp"

namespace fedgen {

CommCost comm_cost(long long p_share, long rounds, long clients, double bandwidth_bps) {
    CommCost c;
    c.n_tx_round = 2 * p_share;
    c.v_round_bytes = 8 * p_share;
    c.v_total_bytes = 8 * clients * rounds * p_share;
    c.t_comm_round_s = bandwidth_bps > 0 ? 64.0 * static_cast<double>(p_share) / bandwidth_bps
                                         : 0.0;
    return c;
}

std::vector<MatF> aggregate_shared(const std::vector<const ParamStoreF*>& stores,
                                   const std::vector<std::string>& names,
                                   const std::vector<double>& weights) {
    if (stores.empty()) throw std::invalid_argument("aggregate_shared: no clients");
    if (stores.size() != weights.size())
        throw std::invalid_argument("aggregate_shared: weight/client count mismatch");
    double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (wsum <= 0) throw std::invalid_argument("aggregate_shared: non-positive total weight");

    std::vector<MatF> out;
    out.reserve(names.size());
    for (const auto& name : names) {
        const auto& first = stores.front()->value(stores.front()->find(name));
        nn::MatT<double> acc = nn::MatT<double>::Zero(first.rows(), first.cols());
        for (std::size_t c = 0; c < stores.size(); ++c) {
            const auto& v = stores[c]->value(stores[c]->find(name));
            if (v.rows() != first.rows() || v.cols() != first.cols())
                throw std::invalid_argument("aggregate_shared: shape mismatch for " + name);
            acc += weights[c] * v.cast<double>();
        }
        // single terminal division keeps identical uploads exactly fixed
        out.push_back((acc / wsum).cast<float>());
    }
    return out;
}

void overwrite_shared(ParamStoreF& store, const std::vector<std::string>& names,
                      const std::vector<MatF>& values) {
    if (names.size() != values.size())
        throw std::invalid_argument("overwrite_shared: name/value count mismatch");
    for (std::size_t i = 0; i < names.size(); ++i) {
        auto& v = store.value(store.find(names[i]));
        if (v.rows() != values[i].rows() || v.cols() != values[i].cols())
            throw std::invalid_argument("overwrite_shared: shape mismatch for " + names[i]);
        v = values[i];
    }
}

namespace {

long thread_budget(std::size_t clients) {
    long n = 1;
    if (const char* env = std::getenv("FEDGEN_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end != env && v >= 1) n = v;
    }
    return std::min<long>(n, static_cast<long>(clients));
}

// one client's local phase: `epochs` shuffled passes of minibatch training.
// the rng stream is derived from (seed, client, round, epoch) so trajectories
// never depend on thread scheduling.
double train_client(AnyModel& model, const ClientData& data, const FederationConfig& cfg,
                    long round, std::size_t client) {
    double loss_sum = 0.0;
    long batches = 0;
    std::vector<std::size_t> order(data.windows.size());
    for (long e = 0; e < cfg.epochs; ++e) {
        Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(client),
                            static_cast<std::uint64_t>(round), static_cast<std::uint64_t>(e)));
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(order);
        for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch)) {
            std::size_t take = std::min(static_cast<std::size_t>(cfg.batch), order.size() - at);
            std::vector<const SensorWindow*> batch(take);
            for (std::size_t i = 0; i < take; ++i) batch[i] = data.windows[order[at + i]];
            MatF packed = pack_windows<float>(batch);
            loss_sum += model.train_batch(packed, static_cast<long>(take), rng);
            ++batches;
        }
    }
    return batches ? loss_sum / static_cast<double>(batches) : 0.0;
}

// fan out client training over a bounded worker pool; client order never
// affects results, only wall-clock
void train_all(std::vector<AnyModel>& models, const std::vector<ClientData>& data,
               const FederationConfig& cfg, long round, std::vector<double>& losses) {
    long workers = thread_budget(models.size());
    if (workers <= 1) {
        for (std::size_t c = 0; c < models.size(); ++c)
            losses[c] = train_client(models[c], data[c], cfg, round, c);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    std::vector<std::thread> pool;
    for (long w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t c = next.fetch_add(1); c < models.size(); c = next.fetch_add(1))
                    losses[c] = train_client(models[c], data[c], cfg, round, c);
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

std::uint64_t slice_checksum(const std::vector<MatF>& values) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& v : values)
        for (long r = 0; r < v.rows(); ++r)
            for (long c = 0; c < v.cols(); ++c) {
                float x = v(r, c);
                h = fnv1a64(&x, sizeof x, h);
            }
    return h;
}

}  // namespace

std::vector<RoundLog> run_federation(std::vector<AnyModel>& models,
                                     const std::vector<ClientData>& data, SharePolicy policy,
                                     const FederationConfig& cfg, const RoundCallback& on_round) {
    if (models.empty()) throw std::invalid_argument("run_federation: empty client selection");
    if (models.size() != data.size())
        throw std::invalid_argument("run_federation: model/data count mismatch");
    for (std::size_t c = 0; c < data.size(); ++c)
        if (data[c].windows.empty())
            throw std::invalid_argument("run_federation: client " + std::to_string(c) +
                                        " has no training windows");

    auto names = shared_names(models.front().partition(), policy);
    for (auto& m : models) {
        auto theirs = shared_names(m.partition(), policy);
        if (theirs != names)
            throw std::invalid_argument("run_federation: shared-parameter names differ across clients");
    }
    long long p_share = count_named(models.front().params(), names);

    std::vector<double> weights;
    weights.reserve(data.size());
    for (const auto& d : data) weights.push_back(static_cast<double>(d.windows.size()));

    std::vector<const ParamStoreF*> stores;
    for (const auto& m : models) stores.push_back(&m.params());

    // initial global snapshot = weighted aggregate of the clients' shared
    // slices; with a common init this is exactly the usual server init
    std::vector<MatF> global;
    if (policy != SharePolicy::Independent) global = aggregate_shared(stores, names, weights);

    auto cost = comm_cost(p_share, cfg.rounds, static_cast<long>(models.size()),
                          cfg.bandwidth_bps);
    std::vector<RoundLog> logs;
    long long cum_bytes = 0;
    double prev_mean = 0.0;
    long flat_rounds = 0;

    for (long r = 0; r < cfg.rounds; ++r) {
        if (policy != SharePolicy::Independent)
            for (auto& m : models) overwrite_shared(m.params(), names, global);

        RoundLog log;
        log.round = r;
        log.client_losses.resize(models.size());
        train_all(models, data, cfg, r, log.client_losses);

        if (policy != SharePolicy::Independent) {
            global = aggregate_shared(stores, names, weights);
            log.p_share = p_share;
            log.bytes_down_per_client = 4 * p_share;
            log.bytes_up_per_client = 4 * p_share;
            cum_bytes += 8 * p_share * static_cast<long long>(models.size());
            log.comm_s = cost.t_comm_round_s;
            log.checksum = slice_checksum(global);
        }
        log.cum_bytes = cum_bytes;
        if (on_round) on_round(log);
        logs.push_back(std::move(log));

        double mean = 0.0;
        for (double l : logs.back().client_losses) mean += l;
        mean /= static_cast<double>(models.size());
        if (cfg.early_stop && r > 0) {
            // relative improvement; a worsening round counts as "no improvement"
            double rel = (prev_mean - mean) / std::max(1e-12, std::abs(prev_mean));
            flat_rounds = (rel < cfg.early_stop_rel) ? flat_rounds + 1 : 0;
            if (flat_rounds >= cfg.early_stop_patience) break;
        }
        prev_mean = mean;
    }

    // final broadcast so every client leaves with the aggregated shared slice
    if (policy != SharePolicy::Independent)
        for (auto& m : models) overwrite_shared(m.params(), names, global);
    return logs;
}

void write_rounds_csv(const fs::path& p, const std::vector<RoundLog>& logs) {
    std::ostringstream os;
    std::size_t clients = logs.empty() ? 0 : logs.front().client_losses.size();
    os << "round,p_share,bytes_down_per_client,bytes_up_per_client,cum_bytes,comm_s,checksum";
    for (std::size_t c = 0; c < clients; ++c) os << ",loss_c" << c;
    os << "\n";
    for (const auto& log : logs) {
        os << log.round << ',' << log.p_share << ',' << log.bytes_down_per_client << ','
           << log.bytes_up_per_client << ',' << log.cum_bytes << ',' << num_str(log.comm_s)
           << ',' << hex64(log.checksum);
        for (double l : log.client_losses) os << ',' << num_str(l);
        os << "\n";
    }
    write_text_file(p, os.str());
}

}  // namespace fedgen
