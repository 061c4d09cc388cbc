#pragma once

// TAnoWGAN: LSTM generator vs LSTM critic trained with the wasserstein
// objective plus gradient penalty. analysis = critic, synthesis = generator.
// anomaly score comes from latent inversion: adam on z minimising a mix of
// squared reconstruction error and squared critic-feature distance.

#include "fedgen/models/common.hpp"
#include "fedgen/rng.hpp"

namespace fedgen {

struct WganConfig {
    long sensors = 10;
    long window = 20;
    std::vector<long> critic_sizes{256, 128};
    std::vector<long> gen_sizes{256, 128};
    long latent = 20;
    double gp_lambda = 10.0;
    double gamma_score = 0.1;
    long inversion_steps = 1500;
    double inversion_lr = 1e-2;
    long critic_updates_per_gen = 5;
};

template <class S>
class TanoWganT {
public:
    using Mat = nn::MatT<S>;
    using Var = nn::VarT<S>;
    using Graph = nn::GraphT<S>;

    TanoWganT(const WganConfig& cfg, double lr, std::uint64_t seed) : cfg_(cfg) {
        Rng rng(seed);
        long in = cfg.sensors;
        for (std::size_t i = 0; i < cfg.critic_sizes.size(); ++i) {
            critic_.emplace_back(store_, "critic.lstm" + std::to_string(i), in,
                                 cfg.critic_sizes[i], rng, true);
            in = cfg.critic_sizes[i];
        }
        critic_out_ = nn::LinearT<S>(store_, "critic.out", in, 1, rng);
        in = cfg.latent;
        for (std::size_t i = 0; i < cfg.gen_sizes.size(); ++i) {
            gen_.emplace_back(store_, "gen.lstm" + std::to_string(i), in, cfg.gen_sizes[i], rng,
                              true);
            in = cfg.gen_sizes[i];
        }
        gen_out_ = nn::LinearT<S>(store_, "gen.out", in, cfg.sensors, rng);
        auto part = partition();
        opt_critic_.lr = opt_gen_.lr = static_cast<S>(lr);
        for (const auto& n : part.analysis) opt_critic_.params.push_back(store_.find(n));
        for (const auto& n : part.synthesis) opt_gen_.params.push_back(store_.find(n));
    }

    // critic: stacked LSTM over the window, scalar head on the last hidden.
    // returns (score B x 1, feature = last hidden B x H)
    struct CriticOut {
        Var score, feature;
    };
    CriticOut critic(Graph& g, const std::vector<Var>& P, const std::vector<Var>& steps) const {
        std::vector<Var> xs = steps;
        Var h_last = xs.front();
        for (std::size_t i = 0; i < critic_.size(); ++i) {
            auto out = critic_[i].run(g, P, xs);
            h_last = out.h_last;
            if (i + 1 < critic_.size()) {
                xs.clear();
                for (auto& h : out.hs) xs.push_back(h);
            }
        }
        return {critic_out_.apply(P, h_last), h_last};
    }

    // generator: latent repeated at every step -> per-step linear head.
    // returns per-step outputs, each B x K
    std::vector<Var> generate(Graph& g, const std::vector<Var>& P, Var z) const {
        std::vector<Var> xs(static_cast<std::size_t>(cfg_.window), z);
        for (std::size_t i = 0; i < gen_.size(); ++i) {
            auto out = gen_[i].run(g, P, xs);
            xs.clear();
            for (auto& h : out.hs) xs.push_back(h);
        }
        for (auto& h : xs) h = gen_out_.apply(P, h);
        return xs;
    }

    // wasserstein critic loss with gradient penalty. x_steps/xg_steps are the
    // real and generated windows as per-step vars; u is the per-sample
    // interpolation draw (B x 1). grad-of-grad flows through the penalty.
    Var critic_loss(Graph& g, const std::vector<Var>& P, const std::vector<Var>& x_steps,
                    const std::vector<Var>& xg_steps, const Mat& u, long B) const {
        Var uc = g.constant(u);
        std::vector<Var> mix_steps;
        std::vector<Var> mix_leaves;
        mix_steps.reserve(x_steps.size());
        for (std::size_t t = 0; t < x_steps.size(); ++t) {
            Var ub = nn::bc_col(uc, cfg_.sensors);
            Var m = nn::add(nn::mul(ub, x_steps[t]),
                            nn::mul(nn::add_scalar(nn::neg(ub), S(1)), xg_steps[t]));
            // reattach through an identity so the graph has a leaf to differentiate
            Var leaf = nn::scale(m, S(1));
            mix_leaves.push_back(leaf);
            mix_steps.push_back(leaf);
        }
        Var f_mix = critic(g, P, mix_steps).score;
        auto gx = nn::grad(nn::sum_all(f_mix), mix_leaves);
        Var sq = g.zeros(B, 1);
        for (auto& gt : gx) sq = nn::add(sq, nn::sum_cols(nn::mul(gt, gt)));
        Var penalty = grad_penalty(sq, B, cfg_.gp_lambda);
        Var f_real = critic(g, P, x_steps).score;
        Var f_fake = critic(g, P, xg_steps).score;
        Var wdist = nn::scale(nn::sub(nn::sum_all(f_fake), nn::sum_all(f_real)),
                              S(1) / static_cast<S>(B));
        return nn::add(wdist, penalty);
    }

    Var generator_loss(Graph& g, const std::vector<Var>& P, Var z, long B) const {
        auto xg = generate(g, P, z);
        Var f = critic(g, P, xg).score;
        return nn::scale(nn::sum_all(f), S(-1) / static_cast<S>(B));
    }

    // one federated-training step: critic every batch, generator every
    // cfg.critic_updates_per_gen-th batch. returns the critic loss.
    double train_batch(const Mat& packed, long B, Rng& rng) {
        Mat z(B, cfg_.latent);
        for (long i = 0; i < B; ++i)
            for (long j = 0; j < cfg_.latent; ++j) z(i, j) = static_cast<S>(rng.normal());
        Mat u(B, 1);
        for (long i = 0; i < B; ++i) u(i, 0) = static_cast<S>(rng.uniform());

        // generated windows for the critic step are plain values (no gen grads)
        Mat xg = generate_values(z, B);
        double closs;
        {
            Graph g;
            auto P = store_.bind_all(g);
            auto x_steps = step_inputs(g, packed, B, cfg_.sensors);
            auto xg_steps = step_inputs(g, xg, B, cfg_.sensors);
            Var l = critic_loss(g, P, x_steps, xg_steps, u, B);
            closs = static_cast<double>(l.val()(0, 0));
            if (!std::isfinite(closs))
                throw std::runtime_error("tano_wgan: non-finite critic loss");
            step_opt(opt_critic_, l, P);
        }
        if (++batch_counter_ % cfg_.critic_updates_per_gen == 0) {
            Mat z2(B, cfg_.latent);
            for (long i = 0; i < B; ++i)
                for (long j = 0; j < cfg_.latent; ++j) z2(i, j) = static_cast<S>(rng.normal());
            Graph g;
            auto P = store_.bind_all(g);
            Var l = generator_loss(g, P, g.constant(z2), B);
            if (!std::isfinite(static_cast<double>(l.val()(0, 0))))
                throw std::runtime_error("tano_wgan: non-finite generator loss");
            step_opt(opt_gen_, l, P);
        }
        return closs;
    }

    // generator forward as plain values, packed layout
    Mat generate_values(const Mat& z, long B) const {
        Graph g;
        auto P = store_.bind_all(g);
        auto xs = generate(g, P, g.constant(z));
        Mat out(B * cfg_.sensors, cfg_.window);
        for (long t = 0; t < cfg_.window; ++t) {
            const Mat& xt = xs[static_cast<std::size_t>(t)].val();
            for (long b = 0; b < B; ++b)
                for (long k = 0; k < cfg_.sensors; ++k) out(b * cfg_.sensors + k, t) = xt(b, k);
        }
        return out;
    }

    // latent inversion scores: per-window adam on z (init 0) minimising
    // (1-gamma)*||x - G(z)||^2 + gamma*||h(x) - h(G(z))||^2; windows in a
    // batch are independent, so one optimiser drives them all at once.
    std::vector<double> score_batch(const Mat& packed, long B, std::uint64_t /*seed*/) const {
        Mat z = Mat::Zero(B, cfg_.latent);
        FreeAdam<S> opt(static_cast<S>(cfg_.inversion_lr));
        Mat h_real;
        {
            Graph g;
            auto P = store_.bind_all(g);
            auto steps = step_inputs(g, packed, B, cfg_.sensors);
            h_real = critic(g, P, steps).feature.val();
        }
        S one_m_g = static_cast<S>(1.0 - cfg_.gamma_score);
        S gam = static_cast<S>(cfg_.gamma_score);
        std::vector<double> scores(static_cast<std::size_t>(B), 0.0);
        for (long it = 0; it < cfg_.inversion_steps; ++it) {
            Graph g;
            auto P = store_.bind_all(g);
            Var zv = g.param(z);
            auto xg = generate(g, P, zv);
            auto x_steps = step_inputs(g, packed, B, cfg_.sensors);
            Var resid = g.zeros(B, 1);
            for (long t = 0; t < cfg_.window; ++t) {
                Var d = nn::sub(x_steps[static_cast<std::size_t>(t)],
                                xg[static_cast<std::size_t>(t)]);
                resid = nn::add(resid, nn::sum_cols(nn::mul(d, d)));
            }
            Var df = nn::sub(g.constant(h_real), critic(g, P, xg).feature);
            Var feat = nn::sum_cols(nn::mul(df, df));
            Var per_window = nn::add(nn::scale(resid, one_m_g), nn::scale(feat, gam));
            Var total = nn::sum_all(per_window);
            auto gz = nn::grad(total, {zv});
            opt.step(z, gz.front().val());
            if (it + 1 == cfg_.inversion_steps)
                for (long b = 0; b < B; ++b)
                    scores[static_cast<std::size_t>(b)] =
                        static_cast<double>(per_window.val()(b, 0));
        }
        for (double s : scores)
            if (!std::isfinite(s)) throw std::runtime_error("tano_wgan: non-finite score");
        return scores;
    }

    ParamPartition partition() const {
        ParamPartition p;
        for (const auto& e : store_.entries)
            (e.name.rfind("critic.", 0) == 0 ? p.analysis : p.synthesis).push_back(e.name);
        return p;
    }

    nn::ParamStoreT<S>& params() { return store_; }
    const nn::ParamStoreT<S>& params() const { return store_; }
    const WganConfig& config() const { return cfg_; }

private:
    void step_opt(nn::AdamT<S>& opt, Var l, const std::vector<Var>& P) {
        std::vector<Var> wrt;
        wrt.reserve(opt.params.size());
        for (int i : opt.params) wrt.push_back(P[static_cast<std::size_t>(i)]);
        auto grads = nn::grad(l, wrt);
        std::vector<Mat> gm;
        gm.reserve(grads.size());
        for (auto& gv : grads) gm.push_back(gv.val());
        opt.step(store_, gm);
    }

    WganConfig cfg_;
    nn::ParamStoreT<S> store_;
    std::vector<nn::LstmT<S>> critic_, gen_;
    nn::LinearT<S> critic_out_, gen_out_;
    nn::AdamT<S> opt_critic_, opt_gen_;
    long batch_counter_ = 0;
};

}  // namespace fedgen
