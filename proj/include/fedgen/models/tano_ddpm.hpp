#pragma once

// TAnoDDPM: denoising diffusion model with a 1-d u-net noise predictor.
// analysis = downsampling path + middle + time embedding, synthesis =
// upsampling path + output head. anomaly score = squared error after
// partial reconstruction (corrupt to t*, denoise back).
//
// windows of length `window` are zero-padded to `pad_to` (divisible by 8)
// inside the net and cropped on the way out; noise and losses live on the
// unpadded region.

#include <cmath>

#include "fedgen/models/common.hpp"
#include "fedgen/rng.hpp"

namespace fedgen {

struct DdpmConfig {
    long sensors = 10;
    long window = 20;
    std::vector<long> channels{32, 64, 128};
    long time_dim = 32;
    long t_diff = 1000;
    double beta0 = 1e-4;
    double beta_t = 2e-2;
    long t_star = 250;
    long pad_to = 24;
};

struct DiffusionSchedule {
    std::vector<double> beta, alpha, abar;  // index t in 1..T; abar[0] = 1

    DiffusionSchedule() = default;
    DiffusionSchedule(long T, double b0, double bT) {
        beta.resize(static_cast<std::size_t>(T) + 1, 0.0);
        alpha.resize(static_cast<std::size_t>(T) + 1, 1.0);
        abar.resize(static_cast<std::size_t>(T) + 1, 1.0);
        for (long t = 1; t <= T; ++t) {
            double b = T == 1 ? b0 : b0 + (bT - b0) * static_cast<double>(t - 1) /
                                              static_cast<double>(T - 1);
            beta[static_cast<std::size_t>(t)] = b;
            alpha[static_cast<std::size_t>(t)] = 1.0 - b;
            abar[static_cast<std::size_t>(t)] = abar[static_cast<std::size_t>(t - 1)] * (1.0 - b);
        }
    }
};

// standard sinusoidal position embedding, dim must be even
inline std::vector<double> sinusoidal_embedding(long t, long dim) {
    long half = dim / 2;
    std::vector<double> e(static_cast<std::size_t>(dim));
    for (long i = 0; i < half; ++i) {
        double f = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                            static_cast<double>(half - 1));
        e[static_cast<std::size_t>(i)] = std::sin(static_cast<double>(t) * f);
        e[static_cast<std::size_t>(half + i)] = std::cos(static_cast<double>(t) * f);
    }
    return e;
}

template <class S>
class TanoDdpmT {
public:
    using Mat = nn::MatT<S>;
    using Var = nn::VarT<S>;
    using Graph = nn::GraphT<S>;

    TanoDdpmT(const DdpmConfig& cfg, double lr, std::uint64_t seed)
        : cfg_(cfg), sched_(cfg.t_diff, cfg.beta0, cfg.beta_t) {
        if (cfg.channels.size() != 3) throw std::invalid_argument("ddpm: expects 3 stages");
        if (cfg.time_dim % 2 || cfg.time_dim < 4)
            throw std::invalid_argument("ddpm: time_dim must be even");
        if (cfg.pad_to % 8 || cfg.pad_to < cfg.window)
            throw std::invalid_argument("ddpm: pad_to must be >= window and divisible by 8");
        Rng rng(seed);
        const auto& ch = cfg.channels;
        long th = ch.back();
        time0_ = nn::LinearT<S>(store_, "time.mlp0", cfg.time_dim, th, rng);
        time1_ = nn::LinearT<S>(store_, "time.mlp1", th, th, rng);
        long cin = cfg.sensors;
        for (std::size_t i = 0; i < ch.size(); ++i) {
            down_rb_.emplace_back(store_, "down.rb" + std::to_string(i), cin, ch[i], th, rng);
            down_ds_.emplace_back(store_, "down.ds" + std::to_string(i), ch[i], ch[i], 4L, rng,
                                  2L, 1L, 1L, false);
            cin = ch[i];
        }
        long c2 = ch[2], c1 = ch[1], c0 = ch[0];
        mid_rb0_ = ResBlock(store_, "mid.rb0", c2, c2, th, rng);
        mid_attn_ = nn::AttentionT<S>(store_, "mid.attn", c2, gn_groups(c2), rng);
        mid_rb1_ = ResBlock(store_, "mid.rb1", c2, c2, th, rng);
        // up stage 0: deepest skip (c2 at pad_to/4)
        up_ct_.emplace_back(store_, "up.ct0", c2, c1, 4L, rng, 2L, 1L);
        up_rba_.emplace_back(store_, "up.rb0a", c1 + c2, c2, th, rng);
        up_rbb_.emplace_back(store_, "up.rb0b", c2, c2, th, rng);
        up_ct_.emplace_back(store_, "up.ct1", c2, c1, 4L, rng, 2L, 1L);
        up_rba_.emplace_back(store_, "up.rb1a", c1 + c1, c1, th, rng);
        up_rbb_.emplace_back(store_, "up.rb1b", c1, c1, th, rng);
        up_ct_.emplace_back(store_, "up.ct2", c1, c0, 4L, rng, 2L, 1L);
        up_rba_.emplace_back(store_, "up.rb2a", c0 + c0, c0, th, rng);
        up_rbb_.emplace_back(store_, "up.rb2b", c0, c0, th, rng);
        head_rb_ = ResBlock(store_, "head.rb", c0, c0, th, rng);
        head_gn_ = nn::GroupNormT<S>(store_, "head.gn", c0, gn_groups(c0));
        head_out_ = nn::Conv1dT<S>(store_, "head.out", c0, cfg.sensors, 1L, rng);
        opt_.lr = static_cast<S>(lr);
        opt_.params.resize(store_.entries.size());
        std::iota(opt_.params.begin(), opt_.params.end(), 0);
    }

    // noise predictor on an already padded (B*K) x pad_to input; ts are the
    // per-sample diffusion steps
    Var predict_eps(Graph& g, const std::vector<Var>& P, Var x, const std::vector<long>& ts,
                    long B) const {
        Mat emb(B, cfg_.time_dim);
        for (long b = 0; b < B; ++b) {
            auto e = sinusoidal_embedding(ts[static_cast<std::size_t>(b)], cfg_.time_dim);
            for (long j = 0; j < cfg_.time_dim; ++j) emb(b, j) = static_cast<S>(e[static_cast<std::size_t>(j)]);
        }
        Var temb = time1_.apply(P, nn::silu(time0_.apply(P, g.constant(emb))));
        Var ts_act = nn::silu(temb);  // each block applies its own projection

        const auto& ch = cfg_.channels;
        long L = cfg_.pad_to;
        Var h = x;
        std::vector<Var> skips;
        std::vector<long> skip_len;
        for (std::size_t i = 0; i < ch.size(); ++i) {
            h = down_rb_[i].apply(g, P, h, ts_act, B, L);
            skips.push_back(h);
            skip_len.push_back(L);
            h = down_ds_[i].apply(g, P, h, B, L);
            L /= 2;
        }
        h = mid_rb0_.apply(g, P, h, ts_act, B, L);
        h = mid_attn_.apply(g, P, h, B, L);
        h = mid_rb1_.apply(g, P, h, ts_act, B, L);
        long c2 = ch[2], c1 = ch[1], c0 = ch[0];
        long cat_in[3] = {c2, c1, c0};
        long ct_out[3] = {c1, c1, c0};
        for (std::size_t j = 0; j < 3; ++j) {
            h = up_ct_[j].apply(g, P, h, B, L);
            L *= 2;
            h = channel_cat(h, skips[2 - j], B, ct_out[j], cat_in[j], L);
            h = up_rba_[j].apply(g, P, h, ts_act, B, L);
            h = up_rbb_[j].apply(g, P, h, ts_act, B, L);
        }
        h = head_rb_.apply(g, P, h, ts_act, B, L);
        h = nn::silu(head_gn_.apply(g, P, h, B, L));
        return head_out_.apply(g, P, h, B, L);
    }

    // closed-form corruption on the unpadded window (values, not graph)
    Mat forward_diffuse(const Mat& x0, long t, const Mat& eps) const {
        if (t < 0 || t > cfg_.t_diff) throw std::invalid_argument("ddpm: t out of range");
        double ab = sched_.abar[static_cast<std::size_t>(t)];
        return (std::sqrt(ab) * x0.template cast<double>() +
                std::sqrt(1.0 - ab) * eps.template cast<double>())
            .template cast<S>();
    }

    // denoising objective: per-sample uniform t, fresh noise
    Var loss(Graph& g, const std::vector<Var>& P, const Mat& packed, long B,
             const std::vector<long>& ts, const Mat& eps) const {
        long K = cfg_.sensors;
        Mat xt(B * K, cfg_.window);
        for (long b = 0; b < B; ++b) {
            double ab = sched_.abar[static_cast<std::size_t>(ts[static_cast<std::size_t>(b)])];
            xt.block(b * K, 0, K, cfg_.window) =
                (std::sqrt(ab) * packed.block(b * K, 0, K, cfg_.window).template cast<double>() +
                 std::sqrt(1.0 - ab) * eps.block(b * K, 0, K, cfg_.window).template cast<double>())
                    .template cast<S>();
        }
        Var eps_hat = predict_cropped(g, P, xt, ts, B);
        Var d = nn::sub(g.constant(eps), eps_hat);
        return nn::scale(nn::sum_all(nn::mul(d, d)), S(1) / static_cast<S>(B));
    }

    double train_batch(const Mat& packed, long B, Rng& rng) {
        std::vector<long> ts(static_cast<std::size_t>(B));
        for (auto& t : ts) t = 1 + static_cast<long>(rng.index(static_cast<std::size_t>(cfg_.t_diff)));
        Mat eps(B * cfg_.sensors, cfg_.window);
        for (long i = 0; i < eps.rows(); ++i)
            for (long j = 0; j < eps.cols(); ++j) eps(i, j) = static_cast<S>(rng.normal());
        Graph g;
        auto P = store_.bind_all(g);
        Var l = loss(g, P, packed, B, ts, eps);
        double lv = static_cast<double>(l.val()(0, 0));
        if (!std::isfinite(lv)) throw std::runtime_error("tano_ddpm: non-finite training loss");
        auto grads = nn::grad(l, P);
        std::vector<Mat> gm;
        gm.reserve(grads.size());
        for (auto& gv : grads) gm.push_back(gv.val());
        opt_.step(store_, gm);
        return lv;
    }

    // corrupt to t_star, then walk the learned reverse chain back to 0.
    // sigma_t^2 = beta_t; the t=1 step is noiseless. deterministic given seed.
    Mat partial_reconstruct(const Mat& packed, long B, long t_star, std::uint64_t seed) const {
        if (t_star > cfg_.t_diff) throw std::invalid_argument("ddpm: t* > T_diff");
        if (t_star <= 0) return packed;
        Rng rng(seed);
        long K = cfg_.sensors;
        Mat x(B * K, cfg_.window);
        {
            double ab = sched_.abar[static_cast<std::size_t>(t_star)];
            double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
            for (long i = 0; i < x.rows(); ++i)
                for (long j = 0; j < x.cols(); ++j)
                    x(i, j) = static_cast<S>(sa * static_cast<double>(packed(i, j)) +
                                             sb * rng.normal());
        }
        for (long t = t_star; t >= 1; --t) {
            Graph g;
            auto P = store_.bind_all(g);
            std::vector<long> ts(static_cast<std::size_t>(B), t);
            Mat eh = predict_cropped(g, P, x, ts, B).val();
            double bt = sched_.beta[static_cast<std::size_t>(t)];
            double at = sched_.alpha[static_cast<std::size_t>(t)];
            double ab = sched_.abar[static_cast<std::size_t>(t)];
            double c_eps = bt / std::sqrt(1.0 - ab);
            double inv_sa = 1.0 / std::sqrt(at);
            double sig = std::sqrt(bt);
            for (long i = 0; i < x.rows(); ++i)
                for (long j = 0; j < x.cols(); ++j) {
                    double mu = inv_sa * (static_cast<double>(x(i, j)) -
                                          c_eps * static_cast<double>(eh(i, j)));
                    x(i, j) = static_cast<S>(t > 1 ? mu + sig * rng.normal() : mu);
                }
        }
        return x;
    }

    std::vector<double> score_batch(const Mat& packed, long B, std::uint64_t seed) const {
        Mat xhat = partial_reconstruct(packed, B, cfg_.t_star, seed);
        std::vector<double> s(static_cast<std::size_t>(B));
        for (long b = 0; b < B; ++b) {
            double acc = 0;
            for (long k = 0; k < cfg_.sensors; ++k)
                for (long t = 0; t < cfg_.window; ++t) {
                    double d = static_cast<double>(packed(b * cfg_.sensors + k, t)) -
                               static_cast<double>(xhat(b * cfg_.sensors + k, t));
                    acc += d * d;
                }
            double sc = acc;
            if (!std::isfinite(sc)) throw std::runtime_error("tano_ddpm: non-finite score");
            s[static_cast<std::size_t>(b)] = sc;
        }
        return s;
    }

    const DiffusionSchedule& schedule() const { return sched_; }

    ParamPartition partition() const {
        ParamPartition p;
        for (const auto& e : store_.entries) {
            bool analysis = e.name.rfind("down.", 0) == 0 || e.name.rfind("mid.", 0) == 0 ||
                            e.name.rfind("time.", 0) == 0;
            (analysis ? p.analysis : p.synthesis).push_back(e.name);
        }
        return p;
    }

    nn::ParamStoreT<S>& params() { return store_; }
    const nn::ParamStoreT<S>& params() const { return store_; }
    const DdpmConfig& config() const { return cfg_; }

private:
    static long gn_groups(long C) { return std::gcd(8L, C); }

    // residual block: conv3 -> +time -> gn -> silu -> conv3 -> gn -> silu,
    // plus a 1x1 shortcut when the channel count changes
    struct ResBlock {
        nn::Conv1dT<S> conv1, conv2, skip;
        nn::LinearT<S> temb;
        nn::GroupNormT<S> gn1, gn2;
        long cin = 0, cout = 0;
        bool has_skip = false;

        ResBlock() = default;
        ResBlock(nn::ParamStoreT<S>& st, const std::string& prefix, long cin_, long cout_,
                 long tdim, Rng& rng)
            : cin(cin_), cout(cout_), has_skip(cin_ != cout_) {
            conv1 = nn::Conv1dT<S>(st, prefix + ".conv1", cin, cout, 3L, rng, 1L, 1L);
            temb = nn::LinearT<S>(st, prefix + ".temb", tdim, cout, rng);
            gn1 = nn::GroupNormT<S>(st, prefix + ".gn1", cout, gn_groups(cout));
            conv2 = nn::Conv1dT<S>(st, prefix + ".conv2", cout, cout, 3L, rng, 1L, 1L);
            gn2 = nn::GroupNormT<S>(st, prefix + ".gn2", cout, gn_groups(cout));
            if (has_skip) skip = nn::Conv1dT<S>(st, prefix + ".skip", cin, cout, 1L, rng);
        }

        Var apply(Graph& g, const std::vector<Var>& P, Var x, Var ts_act, long B, long L) const {
            Var h = conv1.apply(g, P, x, B, L);
            h = add_channel_bias(h, temb.apply(P, ts_act), L);
            h = nn::silu(gn1.apply(g, P, h, B, L));
            h = conv2.apply(g, P, h, B, L);
            h = nn::silu(gn2.apply(g, P, h, B, L));
            Var res = has_skip ? skip.apply(g, P, x, B, L) : x;
            return nn::add(h, res);
        }
    };

    // pad, run the u-net, crop back to the window
    Var predict_cropped(Graph& g, const std::vector<Var>& P, const Mat& xt,
                        const std::vector<long>& ts, long B) const {
        long lpad = (cfg_.pad_to - cfg_.window) / 2;
        Var xp = nn::pad_cols(g.constant(xt), lpad, cfg_.pad_to - cfg_.window - lpad);
        Var out = predict_eps(g, P, xp, ts, B);
        return nn::slice_cols(out, lpad, cfg_.window);
    }

    DdpmConfig cfg_;
    DiffusionSchedule sched_;
    nn::ParamStoreT<S> store_;
    nn::LinearT<S> time0_, time1_;
    std::vector<ResBlock> down_rb_;
    std::vector<nn::Conv1dT<S>> down_ds_;
    ResBlock mid_rb0_, mid_rb1_;
    nn::AttentionT<S> mid_attn_;
    std::vector<nn::ConvT1dT<S>> up_ct_;
    std::vector<ResBlock> up_rba_, up_rbb_;
    ResBlock head_rb_;
    nn::GroupNormT<S> head_gn_;
    nn::Conv1dT<S> head_out_;
    nn::AdamT<S> opt_;
};

}  // namespace fedgen
