#pragma once

// FedSW-TSAD: three-part detector. generator = causal TCN autoencoder with
// weight-normalised convs, discriminator = strided conv critic trained with
// the wasserstein + gradient-penalty objective, predictor = LSTM forecaster
// over a conditioning/target split of the window. analysis = discriminator,
// synthesis = generator, auxiliary = predictor (shared only under full
// federation).

#include <cmath>

#include "fedgen/models/common.hpp"
#include "fedgen/rng.hpp"

namespace fedgen {

struct FedswConfig {
    long sensors = 10;
    long window = 20;
    long cond_len = 15;  // remaining window steps are the forecast target
    std::vector<long> gen_hidden{64, 128, 128};
    long gen_kernel = 3;
    std::vector<long> gen_dilations{1, 2, 4};
    double gen_dropout = 0.1;
    std::vector<long> disc_hidden{128, 128};
    double disc_dropout = 0.1;
    long pred_embed = 32;
    std::vector<long> pred_hidden{256, 256};
    double pred_dropout = 0.1;
    double gp_lambda = 10.0;
    double adv_weight = 0.1;  // weight of the adversarial term in the generator loss
    double alpha = 0.35, beta = 0.15, gamma = 0.5;
    long critic_updates_per_gen = 5;
};

template <class S>
class FedswT {
public:
    using Mat = nn::MatT<S>;
    using Var = nn::VarT<S>;
    using Graph = nn::GraphT<S>;

    FedswT(const FedswConfig& cfg, double lr, std::uint64_t seed) : cfg_(cfg) {
        if (cfg.gen_hidden.size() != cfg.gen_dilations.size())
            throw std::invalid_argument("fedsw: gen hidden/dilation size mismatch");
        if (cfg.cond_len <= 0 || cfg.cond_len >= cfg.window)
            throw std::invalid_argument("fedsw: cond_len must split the window");
        Rng rng(seed);
        // generator: encoder blocks up the hidden list, 1x1 bottleneck, mirrored
        // decoder blocks, linear output conv
        long cin = cfg.sensors;
        int bi = 0;
        for (std::size_t i = 0; i < cfg.gen_hidden.size(); ++i)
            cin = add_block(rng, bi++, cin, cfg.gen_hidden[i], cfg.gen_dilations[i]);
        long bott = cfg.gen_hidden.back();
        bottleneck_ = nn::Conv1dT<S>(store_, "gen.bottleneck", bott, bott, 1L, rng);
        for (std::size_t i = cfg.gen_hidden.size(); i-- > 0;) {
            long cout = i == 0 ? cfg.gen_hidden[0] : cfg.gen_hidden[i - 1];
            cin = add_block(rng, bi++, cin, cout, cfg.gen_dilations[i]);
        }
        long opad = (cfg.gen_kernel - 1);
        out_conv_ = nn::Conv1dT<S>(store_, "gen.out", cin, cfg.sensors, cfg.gen_kernel, rng, 1L,
                                   opad, 1L, true);

        // discriminator: strided convs + groupnorm + leaky relu, then mlp head
        long dc = cfg.sensors, dl = cfg.window;
        for (std::size_t i = 0; i < cfg.disc_hidden.size(); ++i) {
            disc_conv_.emplace_back(store_, "disc.conv" + std::to_string(i), dc,
                                    cfg.disc_hidden[i], 5L, rng, 2L, 2L, 1L, false);
            disc_gn_.emplace_back(store_, "disc.gn" + std::to_string(i), cfg.disc_hidden[i],
                                  std::gcd(8L, cfg.disc_hidden[i]));
            dc = cfg.disc_hidden[i];
            dl = nn::conv_out_len(dl, 5, 2, 2, 1);
        }
        disc_flat_ = dc * dl;
        disc_len_ = dl;
        disc_fc0_ = nn::LinearT<S>(store_, "disc.fc0", disc_flat_, 64L, rng);
        disc_fc1_ = nn::LinearT<S>(store_, "disc.fc1", 64L, 1L, rng);

        // predictor: linear embed, two LSTM layers (zero initial state), head
        pred_embed_ = nn::LinearT<S>(store_, "pred.embed", cfg.sensors, cfg.pred_embed, rng);
        long pin = cfg.pred_embed;
        for (std::size_t i = 0; i < cfg.pred_hidden.size(); ++i) {
            pred_lstm_.emplace_back(store_, "pred.lstm" + std::to_string(i), pin,
                                    cfg.pred_hidden[i], rng, false);
            pin = cfg.pred_hidden[i];
        }
        pred_out_ = nn::LinearT<S>(store_, "pred.out", pin, cfg.sensors, rng);

        auto part = partition();
        opt_disc_.lr = opt_gen_.lr = opt_pred_.lr = static_cast<S>(lr);
        for (const auto& n : part.analysis) opt_disc_.params.push_back(store_.find(n));
        for (const auto& n : part.synthesis) opt_gen_.params.push_back(store_.find(n));
        for (const auto& n : part.auxiliary) opt_pred_.params.push_back(store_.find(n));
    }

    // ---- generator -------------------------------------------------------
    // reconstruction x -> x_hat in packed layout; dropout masks are drawn
    // only when rng != nullptr (training graphs)
    Var generate(Graph& g, const std::vector<Var>& P, Var x, long B, Rng* rng) const {
        long L = cfg_.window;
        Var h = x;
        std::size_t nb = blocks_.size();
        for (std::size_t i = 0; i < nb; ++i) {
            h = apply_block(g, P, blocks_[i], h, B, L, rng);
            if (i + 1 == cfg_.gen_hidden.size())
                h = nn::relu(bottleneck_.apply(g, P, h, B, L));
        }
        return out_conv_.apply(g, P, h, B, L);
    }

    // ---- discriminator ---------------------------------------------------
    Var discriminate(Graph& g, const std::vector<Var>& P, Var x, long B, Rng* rng) const {
        long L = cfg_.window;
        Var h = x;
        for (std::size_t i = 0; i < disc_conv_.size(); ++i) {
            h = disc_conv_[i].apply(g, P, h, B, L);
            L = nn::conv_out_len(L, 5, 2, 2, 1);
            h = nn::leaky_relu(disc_gn_[i].apply(g, P, h, B, L), S(0.2));
            if (rng)
                h = nn::apply_mask(h, nn::dropout_mask<S>(*rng, h.rows(), h.cols(),
                                                          cfg_.disc_dropout));
        }
        Var flat = nn::reshape(h, B, disc_flat_);
        return disc_fc1_.apply(P, nn::leaky_relu(disc_fc0_.apply(P, flat), S(0.2)));
    }

    // ---- predictor -------------------------------------------------------
    // forecast the target steps from the conditioning steps, autoregressively
    // feeding back its own outputs. returns target_len matrices of B x K.
    std::vector<Var> predict(Graph& g, const std::vector<Var>& P,
                             const std::vector<Var>& cond_steps, long B, Rng* rng) const {
        std::vector<typename nn::LstmT<S>::StepCtx> ctx;
        std::vector<Var> h(pred_lstm_.size()), c(pred_lstm_.size());
        for (std::size_t i = 0; i < pred_lstm_.size(); ++i) {
            ctx.push_back(pred_lstm_[i].prep(g, P, B));
            std::tie(h[i], c[i]) = pred_lstm_[i].init_state(g, P, B);
        }
        auto advance = [&](Var x_in) {
            Var inp = pred_embed_.apply(P, x_in);
            for (std::size_t i = 0; i < pred_lstm_.size(); ++i) {
                std::tie(h[i], c[i]) = pred_lstm_[i].step(ctx[i], inp, h[i], c[i]);
                inp = h[i];
                if (rng && i + 1 < pred_lstm_.size())
                    inp = nn::apply_mask(inp, nn::dropout_mask<S>(*rng, inp.rows(), inp.cols(),
                                                                  cfg_.pred_dropout));
            }
            return inp;
        };
        Var hid = cond_steps.front();  // overwritten
        for (const auto& xs : cond_steps) hid = advance(xs);
        long target = cfg_.window - cfg_.cond_len;
        std::vector<Var> preds;
        preds.reserve(static_cast<std::size_t>(target));
        Var y = pred_out_.apply(P, hid);
        preds.push_back(y);
        for (long j = 1; j < target; ++j) {
            hid = advance(y);
            y = pred_out_.apply(P, hid);
            preds.push_back(y);
        }
        return preds;
    }

    // ---- losses ----------------------------------------------------------
    // wasserstein critic loss with gradient penalty on packed interpolates
    Var disc_loss(Graph& g, const std::vector<Var>& P, Var x_real, Var x_fake, const Mat& u,
                  long B, Rng* rng) const {
        Var ub = expand_per_sample(g, g.constant(u), cfg_.sensors, cfg_.window);
        Var mix = nn::scale(
            nn::add(nn::mul(ub, x_real), nn::mul(nn::add_scalar(nn::neg(ub), S(1)), x_fake)),
            S(1));
        Var f_mix = discriminate(g, P, mix, B, rng);
        Var gx = nn::grad(nn::sum_all(f_mix), {mix}).front();
        Var penalty = grad_penalty(per_sample_sq_norm(gx, B, cfg_.sensors), B, cfg_.gp_lambda);
        Var f_real = discriminate(g, P, x_real, B, rng);
        Var f_fake = discriminate(g, P, x_fake, B, rng);
        Var wdist = nn::scale(nn::sub(nn::sum_all(f_fake), nn::sum_all(f_real)),
                              S(1) / static_cast<S>(B));
        return nn::add(wdist, penalty);
    }

    Var gen_loss(Graph& g, const std::vector<Var>& P, Var x, long B, Rng* rng) const {
        Var xh = generate(g, P, x, B, rng);
        Var d = nn::sub(x, xh);
        Var recon = nn::scale(nn::sum_all(nn::mul(d, d)), S(1) / static_cast<S>(B));
        Var adv = nn::scale(nn::sum_all(discriminate(g, P, xh, B, nullptr)),
                            S(-1) / static_cast<S>(B));
        return nn::add(recon, nn::scale(adv, static_cast<S>(cfg_.adv_weight)));
    }

    Var pred_loss(Graph& g, const std::vector<Var>& P, const std::vector<Var>& steps, long B,
                  Rng* rng) const {
        std::vector<Var> cond(steps.begin(), steps.begin() + cfg_.cond_len);
        auto preds = predict(g, P, cond, B, rng);
        Var acc = g.zeros(1, 1);
        for (std::size_t j = 0; j < preds.size(); ++j) {
            Var d = nn::sub(steps[static_cast<std::size_t>(cfg_.cond_len) + j], preds[j]);
            acc = nn::add(acc, nn::sum_all(nn::mul(d, d)));
        }
        return nn::scale(acc, S(1) / static_cast<S>(B));
    }

    // one training step: discriminator + predictor every batch, generator on
    // every critic_updates_per_gen-th. returns the reconstruction mse.
    double train_batch(const Mat& packed, long B, Rng& rng) {
        Mat xhat = generate_values(packed, B);
        double recon = (packed.template cast<double>() - xhat.template cast<double>())
                           .squaredNorm() /
                       static_cast<double>(B);
        Mat u(B, 1);
        for (long i = 0; i < B; ++i) u(i, 0) = static_cast<S>(rng.uniform());
        {
            Graph g;
            auto P = store_.bind_all(g);
            Var l = disc_loss(g, P, g.constant(packed), g.constant(xhat), u, B, &rng);
            if (!std::isfinite(static_cast<double>(l.val()(0, 0))))
                throw std::runtime_error("fedsw: non-finite discriminator loss");
            step_opt(opt_disc_, g, l, P);
        }
        if (++batch_counter_ % cfg_.critic_updates_per_gen == 0) {
            Graph g;
            auto P = store_.bind_all(g);
            Var l = gen_loss(g, P, g.constant(packed), B, &rng);
            if (!std::isfinite(static_cast<double>(l.val()(0, 0))))
                throw std::runtime_error("fedsw: non-finite generator loss");
            step_opt(opt_gen_, g, l, P);
        }
        {
            Graph g;
            auto P = store_.bind_all(g);
            auto steps = step_inputs(g, packed, B, cfg_.sensors);
            Var l = pred_loss(g, P, steps, B, &rng);
            if (!std::isfinite(static_cast<double>(l.val()(0, 0))))
                throw std::runtime_error("fedsw: non-finite predictor loss");
            step_opt(opt_pred_, g, l, P);
        }
        return recon;
    }

    Mat generate_values(const Mat& packed, long B) const {
        Graph g;
        auto P = store_.bind_all(g);
        return generate(g, P, g.constant(packed), B, nullptr).val();
    }

    // alpha * recon + beta * |D(x) - D(x_hat)| + gamma * forecast error
    std::vector<double> score_batch(const Mat& packed, long B, std::uint64_t /*seed*/) const {
        Graph g;
        auto P = store_.bind_all(g);
        Var x = g.constant(packed);
        Var xh = generate(g, P, x, B, nullptr);
        Mat d_real = discriminate(g, P, x, B, nullptr).val();
        Mat d_fake = discriminate(g, P, xh, B, nullptr).val();
        auto steps = step_inputs(g, packed, B, cfg_.sensors);
        std::vector<Var> cond(steps.begin(), steps.begin() + cfg_.cond_len);
        auto preds = predict(g, P, cond, B, nullptr);
        const Mat& xhv = xh.val();
        long K = cfg_.sensors;
        std::vector<double> s(static_cast<std::size_t>(B));
        for (long b = 0; b < B; ++b) {
            double recon = (packed.block(b * K, 0, K, cfg_.window).template cast<double>() -
                            xhv.block(b * K, 0, K, cfg_.window).template cast<double>())
                               .squaredNorm();
            double disc = std::abs(static_cast<double>(d_real(b, 0)) -
                                   static_cast<double>(d_fake(b, 0)));
            double fore = 0;
            for (std::size_t j = 0; j < preds.size(); ++j) {
                const Mat& pj = preds[j].val();
                const Mat& tj = steps[static_cast<std::size_t>(cfg_.cond_len) + j].val();
                fore += (tj.row(b).template cast<double>() - pj.row(b).template cast<double>())
                            .squaredNorm();
            }
            double sc = cfg_.alpha * recon + cfg_.beta * disc + cfg_.gamma * fore;
            if (!std::isfinite(sc)) throw std::runtime_error("fedsw: non-finite score");
            s[static_cast<std::size_t>(b)] = sc;
        }
        return s;
    }

    ParamPartition partition() const {
        ParamPartition p;
        for (const auto& e : store_.entries) {
            if (e.name.rfind("disc.", 0) == 0)
                p.analysis.push_back(e.name);
            else if (e.name.rfind("gen.", 0) == 0)
                p.synthesis.push_back(e.name);
            else
                p.auxiliary.push_back(e.name);
        }
        return p;
    }

    nn::ParamStoreT<S>& params() { return store_; }
    const nn::ParamStoreT<S>& params() const { return store_; }
    const FedswConfig& config() const { return cfg_; }

private:
    // two weight-normalised causal convs + residual shortcut (tcn style)
    struct Block {
        nn::WnConv1dT<S> c1, c2;
        nn::Conv1dT<S> res;
        bool has_res = false;
    };

    long add_block(Rng& rng, int idx, long cin, long cout, long dil) {
        std::string prefix = "gen.block" + std::to_string(idx);
        long pad = (cfg_.gen_kernel - 1) * dil;
        Block b;
        b.c1 = nn::WnConv1dT<S>(store_, prefix + ".conv1", cin, cout, cfg_.gen_kernel, rng, 1L,
                                pad, dil, true);
        b.c2 = nn::WnConv1dT<S>(store_, prefix + ".conv2", cout, cout, cfg_.gen_kernel, rng, 1L,
                                pad, dil, true);
        b.has_res = cin != cout;
        if (b.has_res) b.res = nn::Conv1dT<S>(store_, prefix + ".res", cin, cout, 1L, rng);
        blocks_.push_back(std::move(b));
        return cout;
    }

    Var apply_block(Graph& g, const std::vector<Var>& P, const Block& b, Var x, long B, long L,
                    Rng* rng) const {
        Var h = nn::relu(b.c1.apply(g, P, x, B, L));
        if (rng)
            h = nn::apply_mask(h, nn::dropout_mask<S>(*rng, h.rows(), h.cols(),
                                                      cfg_.gen_dropout));
        h = nn::relu(b.c2.apply(g, P, h, B, L));
        if (rng)
            h = nn::apply_mask(h, nn::dropout_mask<S>(*rng, h.rows(), h.cols(),
                                                      cfg_.gen_dropout));
        Var res = b.has_res ? b.res.apply(g, P, x, B, L) : x;
        return nn::relu(nn::add(h, res));
    }

    void step_opt(nn::AdamT<S>& opt, Graph&, Var l, const std::vector<Var>& P) {
        std::vector<Var> wrt;
        wrt.reserve(opt.params.size());
        for (int i : opt.params) wrt.push_back(P[static_cast<std::size_t>(i)]);
        auto grads = nn::grad(l, wrt);
        std::vector<Mat> gm;
        gm.reserve(grads.size());
        for (auto& gv : grads) gm.push_back(gv.val());
        opt.step(store_, gm);
    }

    FedswConfig cfg_;
    nn::ParamStoreT<S> store_;
    std::vector<Block> blocks_;
    nn::Conv1dT<S> bottleneck_, out_conv_;
    std::vector<nn::Conv1dT<S>> disc_conv_;
    std::vector<nn::GroupNormT<S>> disc_gn_;
    long disc_flat_ = 0, disc_len_ = 0;
    nn::LinearT<S> disc_fc0_, disc_fc1_;
    nn::LinearT<S> pred_embed_, pred_out_;
    std::vector<nn::LstmT<S>> pred_lstm_;
    nn::AdamT<S> opt_disc_, opt_gen_, opt_pred_;
    long batch_counter_ = 0;
};

}  // namespace fedgen
