#pragma once

// LSTM-VAE: stacked-LSTM encoder with gaussian latent heads, stacked-LSTM
// decoder fed the latent at every step. analysis = encoder (incl. heads),
// synthesis = decoder. training loss is the negative ELBO with a unit-variance
// gaussian decoder, i.e. 0.5*sum-of-squares reconstruction + closed-form KL.

#include "fedgen/models/common.hpp"
#include "fedgen/rng.hpp"

namespace fedgen {

struct VaeConfig {
    long sensors = 10;
    long window = 20;
    std::vector<long> enc_sizes{256, 128};
    long latent = 5;
    std::vector<long> dec_sizes{128, 256};
};

template <class S>
class LstmVaeT {
public:
    using Mat = nn::MatT<S>;
    using Var = nn::VarT<S>;
    using Graph = nn::GraphT<S>;

    LstmVaeT(const VaeConfig& cfg, double lr, std::uint64_t seed) : cfg_(cfg) {
        Rng rng(seed);
        long in = cfg.sensors;
        for (std::size_t i = 0; i < cfg.enc_sizes.size(); ++i) {
            enc_.emplace_back(store_, "enc.lstm" + std::to_string(i), in, cfg.enc_sizes[i], rng,
                              true);
            in = cfg.enc_sizes[i];
        }
        mu_ = nn::LinearT<S>(store_, "enc.mu", in, cfg.latent, rng);
        logvar_ = nn::LinearT<S>(store_, "enc.logvar", in, cfg.latent, rng);
        in = cfg.latent;
        for (std::size_t i = 0; i < cfg.dec_sizes.size(); ++i) {
            dec_.emplace_back(store_, "dec.lstm" + std::to_string(i), in, cfg.dec_sizes[i], rng,
                              true);
            in = cfg.dec_sizes[i];
        }
        out_ = nn::LinearT<S>(store_, "dec.out", in, cfg.sensors, rng);
        opt_.lr = static_cast<S>(lr);
        opt_.params.resize(store_.entries.size());
        std::iota(opt_.params.begin(), opt_.params.end(), 0);
    }

    // encoder: relu between stacked layers, heads on the last hidden state
    struct Encoded {
        Var mu, logvar;
    };
    Encoded encode(Graph& g, const std::vector<Var>& P, const std::vector<Var>& steps) const {
        std::vector<Var> xs = steps;
        Var h_last = xs.front();  // overwritten below
        for (std::size_t i = 0; i < enc_.size(); ++i) {
            auto out = enc_[i].run(g, P, xs);
            h_last = out.h_last;
            if (i + 1 < enc_.size()) {
                xs.clear();
                for (auto& h : out.hs) xs.push_back(nn::relu(h));
            }
        }
        return {mu_.apply(P, h_last), logvar_.apply(P, h_last)};
    }

    // decoder: latent repeated at every step, relu between stacked layers
    std::vector<Var> decode(Graph& g, const std::vector<Var>& P, Var z) const {
        std::vector<Var> xs(static_cast<std::size_t>(cfg_.window), z);
        for (std::size_t i = 0; i < dec_.size(); ++i) {
            auto out = dec_[i].run(g, P, xs);
            xs.clear();
            for (auto& h : out.hs)
                xs.push_back(i + 1 < dec_.size() ? nn::relu(h) : h);
        }
        for (auto& h : xs) h = out_.apply(P, h);
        return xs;  // window x (B x K)
    }

    // negative ELBO, batch mean; eps is the reparameterisation draw (B x latent)
    Var loss(Graph& g, const std::vector<Var>& P, const Mat& packed, long B, const Mat& eps) const {
        auto steps = step_inputs(g, packed, B, cfg_.sensors);
        auto enc = encode(g, P, steps);
        Var sigma = nn::vexp(nn::scale(enc.logvar, S(0.5)));
        Var z = nn::add(enc.mu, nn::mul(sigma, g.constant(eps)));
        auto xhat = decode(g, P, z);
        Var recon = g.zeros(1, 1);
        for (long t = 0; t < cfg_.window; ++t) {
            Var d = nn::sub(steps[static_cast<std::size_t>(t)], xhat[static_cast<std::size_t>(t)]);
            recon = nn::add(recon, nn::sum_all(nn::mul(d, d)));
        }
        Var kl = nn::sum_all(nn::scale(
            nn::sub(nn::add(nn::mul(enc.mu, enc.mu), nn::vexp(enc.logvar)),
                    nn::add_scalar(enc.logvar, S(1))),
            S(0.5)));
        return nn::scale(nn::add(nn::scale(recon, S(0.5)), kl), S(1) / static_cast<S>(B));
    }

    double train_batch(const Mat& packed, long B, Rng& rng) {
        Mat eps(B, cfg_.latent);
        for (long i = 0; i < B; ++i)
            for (long j = 0; j < cfg_.latent; ++j) eps(i, j) = static_cast<S>(rng.normal());
        Graph g;
        auto P = store_.bind_all(g);
        Var l = loss(g, P, packed, B, eps);
        auto grads = nn::grad(l, P);
        std::vector<Mat> gm;
        gm.reserve(grads.size());
        for (auto& gv : grads) gm.push_back(gv.val());
        double lv = static_cast<double>(l.val()(0, 0));
        if (!std::isfinite(lv)) throw std::runtime_error("lstm_vae: non-finite training loss");
        opt_.step(store_, gm);
        return lv;
    }

    // deterministic reconstruction from the posterior mean, packed layout out
    Mat reconstruct(const Mat& packed, long B) const {
        Graph g;
        auto P = store_.bind_all(g);
        auto steps = step_inputs(g, packed, B, cfg_.sensors);
        auto enc = encode(g, P, steps);
        auto xhat = decode(g, P, enc.mu);
        Mat out(B * cfg_.sensors, cfg_.window);
        for (long t = 0; t < cfg_.window; ++t) {
            const Mat& xt = xhat[static_cast<std::size_t>(t)].val();  // B x K
            for (long b = 0; b < B; ++b)
                for (long k = 0; k < cfg_.sensors; ++k) out(b * cfg_.sensors + k, t) = xt(b, k);
        }
        return out;
    }

    // squared reconstruction error per window
    std::vector<double> score_batch(const Mat& packed, long B, std::uint64_t /*seed*/) const {
        Mat xhat = reconstruct(packed, B);
        std::vector<double> s(static_cast<std::size_t>(B));
        for (long b = 0; b < B; ++b) {
            double acc = 0;
            for (long k = 0; k < cfg_.sensors; ++k)
                for (long t = 0; t < cfg_.window; ++t) {
                    double d = static_cast<double>(packed(b * cfg_.sensors + k, t)) -
                               static_cast<double>(xhat(b * cfg_.sensors + k, t));
                    acc += d * d;
                }
            s[static_cast<std::size_t>(b)] = acc;
        }
        return s;
    }

    ParamPartition partition() const {
        ParamPartition p;
        for (const auto& e : store_.entries)
            (e.name.rfind("enc.", 0) == 0 ? p.analysis : p.synthesis).push_back(e.name);
        return p;
    }

    nn::ParamStoreT<S>& params() { return store_; }
    const nn::ParamStoreT<S>& params() const { return store_; }
    const VaeConfig& config() const { return cfg_; }

private:
    VaeConfig cfg_;
    nn::ParamStoreT<S> store_;
    std::vector<nn::LstmT<S>> enc_, dec_;
    nn::LinearT<S> mu_, logvar_, out_;
    nn::AdamT<S> opt_;
};

}  // namespace fedgen
