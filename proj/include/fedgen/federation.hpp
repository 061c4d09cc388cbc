#pragma once

// partial-federation round engine: broadcast the global shared slice,
// local minibatch training on every client, upload, |D_c|-weighted
// aggregation. private slices never cross the wire and are never written by
// the server. communication volume/latency is accounted analytically.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fedgen/io_util.hpp"
#include "fedgen/models.hpp"

namespace fedgen {

struct FederationConfig {
    long rounds = 30;
    long epochs = 4;       // local epochs per round
    double lr = 1e-4;      // adam, per client
    long batch = 64;
    std::uint64_t seed = 0;
    // optional early stop: mean local loss improved by less than
    // `early_stop_rel` (relative) for `early_stop_patience` rounds in a row
    bool early_stop = false;
    double early_stop_rel = 1e-4;
    long early_stop_patience = 3;
    double bandwidth_bps = 1e7;  // used for the analytic latency column only
};

struct RoundLog {
    long round = 0;
    std::vector<double> client_losses;   // mean local loss per client
    long long p_share = 0;
    long long bytes_down_per_client = 0;  // 4 * p_share (float32 transport)
    long long bytes_up_per_client = 0;    // 4 * p_share
    long long cum_bytes = 0;              // both directions, all clients so far
    double comm_s = 0.0;                  // analytic per-client latency 64*P/bw
    std::uint64_t checksum = 0;           // fnv1a over the aggregated slice
};

// per-round / total traffic for one (model, policy) pair
struct CommCost {
    long long n_tx_round = 0;     // parameters crossing the link, both ways
    long long v_round_bytes = 0;  // 8 * p_share
    long long v_total_bytes = 0;  // 8 * clients * rounds * p_share
    double t_comm_round_s = 0.0;  // 64 * p_share / bandwidth
};

CommCost comm_cost(long long p_share, long rounds, long clients, double bandwidth_bps);

struct ClientData {
    std::vector<const SensorWindow*> windows;  // |D_c| = windows.size()
};

using RoundCallback = std::function<void(const RoundLog&)>;

// weighted mean of the named entries across stores; weights are the raw
// |D_c| counts and are normalised internally. accumulates in double, returns
// float32 values in `names` order.
std::vector<MatF> aggregate_shared(const std::vector<const ParamStoreF*>& stores,
                                   const std::vector<std::string>& names,
                                   const std::vector<double>& weights);

// server-side broadcast target: writes only the named entries
void overwrite_shared(ParamStoreF& store, const std::vector<std::string>& names,
                      const std::vector<MatF>& values);

// Runs the round loop over `models` in place and returns one log per round.
// Independent policy performs no exchange (clients just train rounds*epochs
// local epochs). Concurrency: clients may train in parallel (bounded by
// FEDGEN_THREADS); results are bit-identical regardless of thread count.
std::vector<RoundLog> run_federation(std::vector<AnyModel>& models,
                                     const std::vector<ClientData>& data, SharePolicy policy,
                                     const FederationConfig& cfg,
                                     const RoundCallback& on_round = {});

void write_rounds_csv(const fs::path& p, const std::vector<RoundLog>& logs);

}  // namespace fedgen
