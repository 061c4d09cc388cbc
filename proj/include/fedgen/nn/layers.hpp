#pragma once

#include <map>
#include <string>
#include <tuple>
#include <utility>

#include "fedgen/nn/graph.hpp"
#include "fedgen/rng.hpp"

namespace fedgen::nn {

// Named parameter registry.  Entry order is construction order and defines the
// binding order per step; aggregation and checkpoints go through names.
template <class S>
struct ParamStoreT {
    struct Entry {
        std::string name;
        MatT<S> value;
        MatT<S> m, v;  // Adam state, lazily initialised
    };
    std::vector<Entry> entries;
    std::map<std::string, int> index;

    int add(const std::string& name, long r, long c) {
        if (index.count(name)) throw NnError("duplicate parameter name: " + name);
        Entry e;
        e.name = name;
        e.value = MatT<S>::Zero(r, c);
        index[name] = static_cast<int>(entries.size());
        entries.push_back(std::move(e));
        return static_cast<int>(entries.size()) - 1;
    }

    MatT<S>& value(int i) { return entries[static_cast<std::size_t>(i)].value; }
    const MatT<S>& value(int i) const { return entries[static_cast<std::size_t>(i)].value; }

    int find(const std::string& name) const {
        auto it = index.find(name);
        if (it == index.end()) throw NnError("unknown parameter: " + name);
        return it->second;
    }

    long long total_size() const {
        long long n = 0;
        for (const auto& e : entries) n += e.value.size();
        return n;
    }

    std::vector<VarT<S>> bind_all(GraphT<S>& g) const {
        std::vector<VarT<S>> out;
        out.reserve(entries.size());
        for (const auto& e : entries) out.push_back(g.param(e.value));
        return out;
    }
};

template <class S>
void uniform_init(MatT<S>& m, Rng& rng, double bound) {
    for (long i = 0; i < m.rows(); ++i)
        for (long j = 0; j < m.cols(); ++j) m(i, j) = static_cast<S>(rng.uniform(-bound, bound));
}

// ------------------------------------------------------------------ layers
// Layers register parameters at construction and index the per-step bound
// vector P (aligned with store entry order) when applied.

template <class S>
struct LinearT {
    int w = -1, b = -1;
    long in = 0, out = 0;

    LinearT() = default;
    LinearT(ParamStoreT<S>& st, const std::string& prefix, long in_, long out_, Rng& rng)
        : in(in_), out(out_) {
        w = st.add(prefix + ".weight", out, in);
        b = st.add(prefix + ".bias", 1, out);
        double bound = 1.0 / std::sqrt(static_cast<double>(in));
        uniform_init(st.value(w), rng, bound);
        uniform_init(st.value(b), rng, bound);
    }

    VarT<S> apply(const std::vector<VarT<S>>& P, VarT<S> x) const {
        return add(matmul(x, transpose(P[static_cast<std::size_t>(w)])),
                   bc_row(P[static_cast<std::size_t>(b)], x.rows()));
    }
};

// single LSTM layer, PyTorch gate order (i, f, g, o) and double-bias shape;
// optionally with learnable initial states
template <class S>
struct LstmT {
    int w_ih = -1, w_hh = -1, b_ih = -1, b_hh = -1, h0 = -1, c0 = -1;
    long I = 0, H = 0;
    bool learn_init = true;

    LstmT() = default;
    LstmT(ParamStoreT<S>& st, const std::string& prefix, long I_, long H_, Rng& rng,
          bool learn_init_ = true)
        : I(I_), H(H_), learn_init(learn_init_) {
        w_ih = st.add(prefix + ".weight_ih", 4 * H, I);
        w_hh = st.add(prefix + ".weight_hh", 4 * H, H);
        b_ih = st.add(prefix + ".bias_ih", 1, 4 * H);
        b_hh = st.add(prefix + ".bias_hh", 1, 4 * H);
        double bound = 1.0 / std::sqrt(static_cast<double>(H));
        uniform_init(st.value(w_ih), rng, bound);
        uniform_init(st.value(w_hh), rng, bound);
        uniform_init(st.value(b_ih), rng, bound);
        uniform_init(st.value(b_hh), rng, bound);
        if (learn_init) {
            h0 = st.add(prefix + ".h0", 1, H);
            c0 = st.add(prefix + ".c0", 1, H);
        }
    }

    struct Out {
        std::vector<VarT<S>> hs;  // per-step hidden, each B x H
        VarT<S> h_last, c_last;
    };

    // weights prepared once per graph so repeated step() calls share nodes
    struct StepCtx {
        VarT<S> wiT, whT, bias;
    };

    StepCtx prep(GraphT<S>&, const std::vector<VarT<S>>& P, long B) const {
        return {transpose(P[static_cast<std::size_t>(w_ih)]),
                transpose(P[static_cast<std::size_t>(w_hh)]),
                bc_row(add(P[static_cast<std::size_t>(b_ih)], P[static_cast<std::size_t>(b_hh)]),
                       B)};
    }

    std::pair<VarT<S>, VarT<S>> init_state(GraphT<S>& g, const std::vector<VarT<S>>& P,
                                           long B) const {
        if (learn_init)
            return {bc_row(P[static_cast<std::size_t>(h0)], B),
                    bc_row(P[static_cast<std::size_t>(c0)], B)};
        return {g.zeros(B, H), g.zeros(B, H)};
    }

    std::pair<VarT<S>, VarT<S>> step(const StepCtx& ctx, VarT<S> x, VarT<S> h, VarT<S> c) const {
        VarT<S> gates = add(add(matmul(x, ctx.wiT), matmul(h, ctx.whT)), ctx.bias);
        VarT<S> gi = sigmoid(slice_cols(gates, 0, H));
        VarT<S> gf = sigmoid(slice_cols(gates, H, H));
        VarT<S> gg = vtanh(slice_cols(gates, 2 * H, H));
        VarT<S> go = sigmoid(slice_cols(gates, 3 * H, H));
        VarT<S> cn = add(mul(gf, c), mul(gi, gg));
        VarT<S> hn = mul(go, vtanh(cn));
        return {hn, cn};
    }

    Out run(GraphT<S>& g, const std::vector<VarT<S>>& P, const std::vector<VarT<S>>& xs) const {
        long B = xs.front().rows();
        auto [h, c] = init_state(g, P, B);
        StepCtx ctx = prep(g, P, B);
        Out out;
        out.hs.reserve(xs.size());
        for (const auto& x : xs) {
            std::tie(h, c) = step(ctx, x, h, c);
            out.hs.push_back(h);
        }
        out.h_last = h;
        out.c_last = c;
        return out;
    }
};

namespace detail {
// broadcast a 1 x C parameter to one scalar per (sample, channel) row
template <class S>
VarT<S> per_channel_col(GraphT<S>& g, VarT<S> rowvec, long B) {
    long C = rowvec.cols();
    return reshape(matmul(g.ones(B, 1), rowvec), B * C, 1);
}
}  // namespace detail

template <class S>
struct Conv1dT {
    int w = -1, b = -1;
    long Cin = 0, Cout = 0, k = 1, stride = 1, pad = 0, dil = 1;
    bool causal = false;  // left-pad only (pad amount = pad)

    Conv1dT() = default;
    Conv1dT(ParamStoreT<S>& st, const std::string& prefix, long Cin_, long Cout_, long k_, Rng& rng,
            long stride_ = 1, long pad_ = 0, long dil_ = 1, bool causal_ = false)
        : Cin(Cin_), Cout(Cout_), k(k_), stride(stride_), pad(pad_), dil(dil_), causal(causal_) {
        w = st.add(prefix + ".weight", Cout, Cin * k);
        b = st.add(prefix + ".bias", 1, Cout);
        double bound = 1.0 / std::sqrt(static_cast<double>(Cin * k));
        uniform_init(st.value(w), rng, bound);
        uniform_init(st.value(b), rng, bound);
    }

    VarT<S> apply_with_weight(GraphT<S>& g, VarT<S> weight, const std::vector<VarT<S>>& P,
                              VarT<S> x, long B, long Lin) const {
        VarT<S> xin = x;
        ConvMeta m{B, Cin, Cout, k, stride, 0, dil, Lin, 0};
        if (causal) {
            xin = pad_cols(x, pad, 0);
            m.Lin = Lin + pad;
        } else {
            m.pad = pad;
        }
        VarT<S> y = conv1d(xin, weight, m);
        VarT<S> bias = detail::per_channel_col(g, P[static_cast<std::size_t>(b)], B);
        return add(y, bc_col(bias, y.cols()));
    }

    VarT<S> apply(GraphT<S>& g, const std::vector<VarT<S>>& P, VarT<S> x, long B, long Lin) const {
        return apply_with_weight(g, P[static_cast<std::size_t>(w)], P, x, B, Lin);
    }
};

// weight-normalised conv: w = g * v / ||v||_row
template <class S>
struct WnConv1dT {
    Conv1dT<S> conv;  // holds v under ".weight" plus bias
    int gscale = -1;

    WnConv1dT() = default;
    WnConv1dT(ParamStoreT<S>& st, const std::string& prefix, long Cin, long Cout, long k, Rng& rng,
              long stride = 1, long pad = 0, long dil = 1, bool causal = false)
        : conv(st, prefix, Cin, Cout, k, rng, stride, pad, dil, causal) {
        gscale = st.add(prefix + ".weight_g", 1, Cout);
        for (long o = 0; o < Cout; ++o)
            st.value(gscale)(0, o) = st.value(conv.w).row(o).norm();
    }

    VarT<S> apply(GraphT<S>& g, const std::vector<VarT<S>>& P, VarT<S> x, long B, long Lin) const {
        VarT<S> v = P[static_cast<std::size_t>(conv.w)];
        VarT<S> norm = vsqrt(sum_cols(mul(v, v)));
        VarT<S> s = mul(transpose(P[static_cast<std::size_t>(gscale)]), reciprocal(norm));
        VarT<S> w = mul(v, bc_col(s, v.cols()));
        return conv.apply_with_weight(g, w, P, x, B, Lin);
    }
};

template <class S>
struct ConvT1dT {
    int w = -1, b = -1;
    long Cin = 0, Cout = 0, k = 1, stride = 1, pad = 0;

    ConvT1dT() = default;
    ConvT1dT(ParamStoreT<S>& st, const std::string& prefix, long Cin_, long Cout_, long k_,
             Rng& rng, long stride_ = 1, long pad_ = 0)
        : Cin(Cin_), Cout(Cout_), k(k_), stride(stride_), pad(pad_) {
        // stored as the adjoint conv's weight: (Cin) x (Cout*k)
        w = st.add(prefix + ".weight", Cin, Cout * k);
        b = st.add(prefix + ".bias", 1, Cout);
        double bound = 1.0 / std::sqrt(static_cast<double>(Cout * k));
        uniform_init(st.value(w), rng, bound);
        uniform_init(st.value(b), rng, bound);
    }

    long out_len(long Lin) const { return (Lin - 1) * stride - 2 * pad + k; }

    VarT<S> apply(GraphT<S>& g, const std::vector<VarT<S>>& P, VarT<S> x, long B, long Lin) const {
        long Lout = out_len(Lin);
        ConvMeta m{B, Cout, Cin, k, stride, pad, 1, Lout, 0};  // adjoint conv: Cout -> Cin
        VarT<S> y = conv1d_bwd_data(x, P[static_cast<std::size_t>(w)], m);
        VarT<S> bias = detail::per_channel_col(g, P[static_cast<std::size_t>(b)], B);
        return add(y, bc_col(bias, y.cols()));
    }
};

template <class S>
struct GroupNormT {
    int gamma = -1, beta = -1;
    long C = 0, G = 1;
    S eps = static_cast<S>(1e-5);

    GroupNormT() = default;
    GroupNormT(ParamStoreT<S>& st, const std::string& prefix, long C_, long G_) : C(C_), G(G_) {
        if (C % G != 0) throw NnError("GroupNorm: C % G != 0");
        gamma = st.add(prefix + ".weight", 1, C);
        beta = st.add(prefix + ".bias", 1, C);
        st.value(gamma).setOnes();
    }

    VarT<S> apply(GraphT<S>& g, const std::vector<VarT<S>>& P, VarT<S> x, long B, long L) const {
        long cs = C / G;
        S inv_n = S(1) / static_cast<S>(cs * L);
        VarT<S> xg = reshape(x, B * G, cs * L);
        VarT<S> mu = scale(sum_cols(xg), inv_n);
        VarT<S> xc = sub(xg, bc_col(mu, cs * L));
        VarT<S> var = scale(sum_cols(mul(xc, xc)), inv_n);
        VarT<S> rstd = reciprocal(vsqrt(add_scalar(var, eps)));
        VarT<S> xn = reshape(mul(xc, bc_col(rstd, cs * L)), B * C, L);
        VarT<S> gam = detail::per_channel_col(g, P[static_cast<std::size_t>(gamma)], B);
        VarT<S> bet = detail::per_channel_col(g, P[static_cast<std::size_t>(beta)], B);
        return add(mul(xn, bc_col(gam, L)), bc_col(bet, L));
    }
};

template <class S>
VarT<S> concat_rows_all(std::vector<VarT<S>> vs) {
    while (vs.size() > 1) {
        std::vector<VarT<S>> next;
        for (std::size_t i = 0; i + 1 < vs.size(); i += 2)
            next.push_back(concat_rows(vs[i], vs[i + 1]));
        if (vs.size() % 2) next.push_back(vs.back());
        vs = std::move(next);
    }
    return vs.front();
}

// single-head self-attention over the length axis (DDPM bottleneck style)
template <class S>
struct AttentionT {
    GroupNormT<S> norm;
    Conv1dT<S> qkv;   // C -> 3C, 1x1, no bias used (bias left at zero and shared API)
    Conv1dT<S> proj;  // C -> C, 1x1
    long C = 0;
    bool qkv_bias = false;

    AttentionT() = default;
    AttentionT(ParamStoreT<S>& st, const std::string& prefix, long C_, long G, Rng& rng)
        : C(C_) {
        norm = GroupNormT<S>(st, prefix + ".norm", C, G);
        // qkv without bias: register weight only
        qkv.Cin = C;
        qkv.Cout = 3 * C;
        qkv.k = 1;
        qkv.w = st.add(prefix + ".qkv.weight", 3 * C, C);
        uniform_init(st.value(qkv.w), rng, 1.0 / std::sqrt(static_cast<double>(C)));
        proj = Conv1dT<S>(st, prefix + ".proj", C, C, 1, rng);
    }

    VarT<S> apply(GraphT<S>& g, const std::vector<VarT<S>>& P, VarT<S> x, long B, long L) const {
        VarT<S> h = norm.apply(g, P, x, B, L);
        ConvMeta m{B, C, 3 * C, 1, 1, 0, 1, L, 0};
        VarT<S> t3 = conv1d(h, P[static_cast<std::size_t>(qkv.w)], m);
        S sc = S(1) / static_cast<S>(std::sqrt(static_cast<double>(C)));
        std::vector<VarT<S>> outs;
        outs.reserve(static_cast<std::size_t>(B));
        for (long b = 0; b < B; ++b) {
            VarT<S> q = slice_rows(t3, b * 3 * C, C);
            VarT<S> k = slice_rows(t3, b * 3 * C + C, C);
            VarT<S> v = slice_rows(t3, b * 3 * C + 2 * C, C);
            VarT<S> att = softmax_rows(scale(matmul(transpose(q), k), sc));  // L x L
            outs.push_back(matmul(v, transpose(att)));                       // C x L
        }
        VarT<S> o = concat_rows_all(std::move(outs));
        return add(x, proj.apply(g, P, o, B, L));
    }
};

// ------------------------------------------------------------------- adam

template <class S>
struct AdamT {
    S lr = static_cast<S>(1e-4);
    S beta1 = static_cast<S>(0.9), beta2 = static_cast<S>(0.999);
    S eps = static_cast<S>(1e-8);
    long t = 0;
    std::vector<int> params;  // store entry indices this optimizer owns

    void step(ParamStoreT<S>& st, const std::vector<MatT<S>>& grads) {
        ++t;
        S c1 = S(1) - static_cast<S>(std::pow(static_cast<double>(beta1), static_cast<double>(t)));
        S c2 = S(1) - static_cast<S>(std::pow(static_cast<double>(beta2), static_cast<double>(t)));
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& e = st.entries[static_cast<std::size_t>(params[i])];
            const auto& gmat = grads[i];
            if (e.m.size() == 0) {
                e.m = MatT<S>::Zero(e.value.rows(), e.value.cols());
                e.v = MatT<S>::Zero(e.value.rows(), e.value.cols());
            }
            e.m = beta1 * e.m + (S(1) - beta1) * gmat;
            e.v = (beta2 * e.v).eval();
            e.v.array() += (S(1) - beta2) * gmat.array().square();
            e.value.array() -=
                lr * (e.m.array() / c1) / ((e.v.array() / c2).sqrt() + eps);
        }
    }
};

template <class S>
MatT<S> dropout_mask(Rng& rng, long r, long c, double p) {
    MatT<S> m(r, c);
    S keep = static_cast<S>(1.0 / (1.0 - p));
    for (long i = 0; i < r; ++i)
        for (long j = 0; j < c; ++j) m(i, j) = rng.uniform() < p ? S(0) : keep;
    return m;
}

}  // namespace fedgen::nn
