#pragma once

// shared bits for the four model families: parameter partitions, share
// policies, and the window-batch layout every model consumes.
//
// batch layout ("packed"): B windows of K channels x W steps stacked into a
// (B*K) x W matrix, row b*K + k = channel k of window b. conv models use it
// directly; recurrent models slice per-step B x K inputs out of it.

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedgen/nn/layers.hpp"
#include "fedgen/series.hpp"

namespace fedgen {

enum class Family { LstmVae, TanoWgan, FedswTsad, TanoDdpm };
enum class SharePolicy { Full, AnalysisOnly, SynthesisOnly, Independent };

Family parse_family(const std::string& s);
std::string family_name(Family f);
SharePolicy parse_policy(const std::string& s);
std::string policy_name(SharePolicy p);

// disjoint name lists covering the full trainable set
struct ParamPartition {
    std::vector<std::string> analysis;
    std::vector<std::string> synthesis;
    std::vector<std::string> auxiliary;
};

std::vector<std::string> shared_names(const ParamPartition& part, SharePolicy policy);

template <class S>
long long count_named(const nn::ParamStoreT<S>& st, const std::vector<std::string>& names) {
    long long n = 0;
    for (const auto& name : names) {
        const auto& v = st.value(st.find(name));
        n += static_cast<long long>(v.rows()) * v.cols();
    }
    return n;
}

template <class S>
long long count_params(const nn::ParamStoreT<S>& st, const ParamPartition& part,
                       SharePolicy policy) {
    return count_named(st, shared_names(part, policy));
}

template <class S>
nn::MatT<S> pack_windows(const std::vector<const SensorWindow*>& ws) {
    if (ws.empty()) throw std::invalid_argument("pack_windows: empty batch");
    long K = ws.front()->data.rows(), W = ws.front()->data.cols();
    nn::MatT<S> out(static_cast<long>(ws.size()) * K, W);
    for (std::size_t b = 0; b < ws.size(); ++b)
        out.block(static_cast<long>(b) * K, 0, K, W) = ws[b]->data.template cast<S>();
    return out;
}

// per-step inputs for recurrent models: step t -> B x K matrix
template <class S>
std::vector<nn::VarT<S>> step_inputs(nn::GraphT<S>& g, const nn::MatT<S>& packed, long B, long K) {
    long W = packed.cols();
    std::vector<nn::VarT<S>> steps;
    steps.reserve(static_cast<std::size_t>(W));
    for (long t = 0; t < W; ++t) {
        nn::MatT<S> x(B, K);
        for (long b = 0; b < B; ++b)
            for (long k = 0; k < K; ++k) x(b, k) = packed(b * K + k, t);
        steps.push_back(g.constant(std::move(x)));
    }
    return steps;
}

// expand a B x 1 per-sample column to the packed (B*K) x W layout
template <class S>
nn::VarT<S> expand_per_sample(nn::GraphT<S>& g, nn::VarT<S> col, long K, long W) {
    long B = col.rows();
    nn::VarT<S> bk = nn::reshape(nn::matmul(col, g.ones(1, K)), B * K, 1);
    return nn::bc_col(bk, W);
}

// add a per-(sample,channel) row vector (B x C) across the length axis
template <class S>
nn::VarT<S> add_channel_bias(nn::VarT<S> x, nn::VarT<S> bc, long L) {
    return nn::add(x, nn::bc_col(nn::reshape(bc, bc.rows() * bc.cols(), 1), L));
}

// concat along channels in the packed layout: (B*C1) x L and (B*C2) x L
// -> (B*(C1+C2)) x L with per-sample interleaving, done via reshape tricks
template <class S>
nn::VarT<S> channel_cat(nn::VarT<S> a, nn::VarT<S> b, long B, long C1, long C2, long L) {
    nn::VarT<S> fa = nn::reshape(a, B, C1 * L);
    nn::VarT<S> fb = nn::reshape(b, B, C2 * L);
    return nn::reshape(nn::concat_cols(fa, fb), B * (C1 + C2), L);
}

// per-sample sum of squares of a packed (B*K) x W tensor -> B x 1
template <class S>
nn::VarT<S> per_sample_sq_norm(nn::VarT<S> x, long B, long K) {
    nn::VarT<S> sq = nn::sum_cols(nn::mul(x, x));          // (B*K) x 1
    return nn::sum_cols(nn::reshape(sq, B, K));            // B x 1
}

// wasserstein gradient penalty lambda * mean_b (||g_b|| - 1)^2 from per-sample
// squared gradient norms (B x 1); shared by both critics so the analytic
// linear-critic value is checked against the code the models actually run
template <class S>
nn::VarT<S> grad_penalty(nn::VarT<S> sq_norms, long B, double lambda) {
    nn::VarT<S> dev = nn::add_scalar(nn::vsqrt(sq_norms), S(-1));
    return nn::scale(nn::sum_all(nn::mul(dev, dev)),
                     static_cast<S>(lambda) / static_cast<S>(B));
}

// standalone Adam for free tensors (latent inversion), mirrors AdamT's math
template <class S>
struct FreeAdam {
    S lr, beta1 = static_cast<S>(0.9), beta2 = static_cast<S>(0.999);
    S eps = static_cast<S>(1e-8);
    long t = 0;
    nn::MatT<S> m, v;

    explicit FreeAdam(S lr_) : lr(lr_) {}

    void step(nn::MatT<S>& value, const nn::MatT<S>& grad) {
        ++t;
        if (m.size() == 0) {
            m = nn::MatT<S>::Zero(value.rows(), value.cols());
            v = nn::MatT<S>::Zero(value.rows(), value.cols());
        }
        S c1 = S(1) - static_cast<S>(std::pow(static_cast<double>(beta1), static_cast<double>(t)));
        S c2 = S(1) - static_cast<S>(std::pow(static_cast<double>(beta2), static_cast<double>(t)));
        m = beta1 * m + (S(1) - beta1) * grad;
        v = (beta2 * v).eval();
        v.array() += (S(1) - beta2) * grad.array().square();
        value.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    }
};

}  // namespace fedgen
