#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

// Small reverse-mode autodiff engine on Eigen matrices.  Every vjp is built
// out of the same differentiable ops, so grad() output stays connected to the
// graph and can be differentiated again (needed for the gradient-penalty term,
// which differentiates an input-gradient norm w.r.t. parameters).
//
// Layout conventions used by the layers:
//  - plain matrices are (rows x cols), row-major
//  - a (B, C, L) tensor is stored as a (B*C) x L matrix, row b*C+c
//  - LSTM inputs are passed step-by-step as B x I matrices
// reshape() is free to reinterpret because storage is row-major.

namespace fedgen::nn {

struct NnError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <class S>
using MatT = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class S>
class GraphT;

template <class S>
struct VarT {
    GraphT<S>* g = nullptr;
    int id = -1;

    bool valid() const { return g != nullptr && id >= 0; }
    const MatT<S>& val() const;
    long rows() const { return val().rows(); }
    long cols() const { return val().cols(); }
};

template <class S>
class GraphT {
public:
    using Mat = MatT<S>;
    using Var = VarT<S>;
    // given (graph, self id, upstream grad id) return grad ids for inputs a,b (-1 = none)
    using BackFn = std::function<std::pair<int, int>(GraphT&, int, int)>;

    struct Node {
        Mat val;
        int a = -1, b = -1;
        bool rg = false;
        BackFn back;
    };

    // deque, not vector: vjps append nodes while other node members (including
    // the running vjp closure itself) are referenced, so elements must never move
    std::deque<Node> nodes;

    Var make(Mat v, int a, int b, bool rg, BackFn back) {
        Node n;
        n.val = std::move(v);
        n.a = a;
        n.b = b;
        n.rg = rg;
        n.back = std::move(back);
        nodes.push_back(std::move(n));
        return Var{this, static_cast<int>(nodes.size()) - 1};
    }

    Var constant(Mat v) { return make(std::move(v), -1, -1, false, nullptr); }
    Var param(const Mat& v) { return make(v, -1, -1, true, nullptr); }

    Var zeros(long r, long c) { return constant(Mat::Zero(r, c)); }
    Var ones(long r, long c) { return constant(Mat::Ones(r, c)); }

    bool rg(int id) const { return id >= 0 && nodes[static_cast<std::size_t>(id)].rg; }
    const Mat& val(int id) const { return nodes[static_cast<std::size_t>(id)].val; }

    std::size_t size() const { return nodes.size(); }
};

template <class S>
const MatT<S>& VarT<S>::val() const {
    return g->nodes[static_cast<std::size_t>(id)].val;
}

// ---------------------------------------------------------------- basic ops

template <class S>
VarT<S> add(VarT<S> a, VarT<S> b) {
    auto* g = a.g;
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw NnError("add: shape mismatch");
    return g->make(a.val() + b.val(), a.id, b.id, g->rg(a.id) || g->rg(b.id),
                   [](GraphT<S>& gr, int self, int gid) {
                       auto& n = gr.nodes[static_cast<std::size_t>(self)];
                       int ga = gr.rg(n.a) ? gid : -1;
                       int gb = gr.rg(n.b) ? gid : -1;
                       return std::make_pair(ga, gb);
                   });
}

template <class S>
VarT<S> scale(VarT<S> a, S c) {
    auto* g = a.g;
    return g->make(a.val() * c, a.id, -1, g->rg(a.id), [c](GraphT<S>& gr, int self, int gid) {
        auto& n = gr.nodes[static_cast<std::size_t>(self)];
        int ga = -1;
        if (gr.rg(n.a)) ga = scale(VarT<S>{&gr, gid}, c).id;
        return std::make_pair(ga, -1);
    });
}

template <class S>
VarT<S> neg(VarT<S> a) {
    return scale(a, S(-1));
}

template <class S>
VarT<S> sub(VarT<S> a, VarT<S> b) {
    return add(a, neg(b));
}

template <class S>
VarT<S> add_scalar(VarT<S> a, S c) {
    auto* g = a.g;
    return g->make((a.val().array() + c).matrix(), a.id, -1, g->rg(a.id),
                   [](GraphT<S>& gr, int self, int gid) {
                       auto& n = gr.nodes[static_cast<std::size_t>(self)];
                       return std::make_pair(gr.rg(n.a) ? gid : -1, -1);
                   });
}

template <class S>
VarT<S> mul(VarT<S> a, VarT<S> b) {
    auto* g = a.g;
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw NnError("mul: shape mismatch");
    return g->make(a.val().cwiseProduct(b.val()), a.id, b.id, g->rg(a.id) || g->rg(b.id),
                   [](GraphT<S>& gr, int self, int gid) {
                       auto& n = gr.nodes[static_cast<std::size_t>(self)];
                       int aid = n.a, bid = n.b;
                       int ga = -1, gb = -1;
                       if (gr.rg(aid)) ga = mul(VarT<S>{&gr, gid}, VarT<S>{&gr, bid}).id;
                       if (gr.rg(bid)) gb = mul(VarT<S>{&gr, gid}, VarT<S>{&gr, aid}).id;
                       return std::make_pair(ga, gb);
                   });
}

template <class S>
VarT<S> matmul(VarT<S> a, VarT<S> b) {
    auto* g = a.g;
    if (a.cols() != b.rows()) throw NnError("matmul: inner dim mismatch");
    return g->make(a.val() * b.val(), a.id, b.id, g->rg(a.id) || g->rg(b.id),
                   [](GraphT<S>& gr, int self, int gid) {
                       auto& n = gr.nodes[static_cast<std::size_t>(self)];
                       int aid = n.a, bid = n.b;
                       int ga = -1, gb = -1;
                       if (gr.rg(aid))
                           ga = matmul(VarT<S>{&gr, gid}, transpose(VarT<S>{&gr, bid})).id;
                       if (gr.rg(bid))
                           gb = matmul(transpose(VarT<S>{&gr, aid}), VarT<S>{&gr, gid}).id;
                       return std::make_pair(ga, gb);
                   });
}

template <class S>
VarT<S> transpose(VarT<S> a) {
    auto* g = a.g;
    return g->make(a.val().transpose(), a.id, -1, g->rg(a.id),
                   [](GraphT<S>& gr, int self, int gid) {
                       auto& n = gr.nodes[static_cast<std::size_t>(self)];
                       int ga = gr.rg(n.a) ? transpose(VarT<S>{&gr, gid}).id : -1;
                       return std::make_pair(ga, -1);
                   });
}

// ------------------------------------------------------------ elementwise

template <class S>
VarT<S> reciprocal(VarT<S> a) {
    auto* g = a.g;
    return g->make(a.val().cwiseInverse(), a.id, -1, g->rg(a.id),
                   [](GraphT<S>& gr, int self, int gid) {
                       auto& n = gr.nodes[static_cast<std::size_t>(self)];
                       int ga = -1;
                       if (gr.rg(n.a)) {
                           VarT<S> y{&gr, self}, gv{&gr, gid};
                           ga = neg(mul(gv, mul(y, y))).id;
                       }
                       return std::make_pair(ga, -1);
                   });
}

template <class S>
VarT<S> vsqrt(VarT<S> a) {
    auto* g = a.g;
    return g->make(a.val().cwiseSqrt(), a.id, -1, g->rg(a.id),
                   [](GraphT<S>& gr, int self, int gid) {
                       auto& n = gr.nodes[static_cast<std::size_t>(self)];
                       int ga = -1;
                       if (gr.rg(n.a)) {
                           VarT<S> y{&gr, self}, gv{&gr, gid};
                           ga = scale(mul(gv, reciprocal(y)), S(0.5)).id;
                       }
                       return std::make_pair(ga, -1);
                   });
}

template <class S>
VarT<S> vexp(VarT<S> a) {
    auto* g = a.g;
    return g->make(a.val().array().exp().matrix(), a.id, -1, g->rg(a.id),
                   [](GraphT<S>& gr, int self, int gid) {
                       auto& n = gr.nodes[static_cast<std::size_t>(self)];
                       int ga = -1;
                       if (gr.rg(n.a)) ga = mul(VarT<S>{&gr, gid}, VarT<S>{&gr, self}).id;
                       return std::make_pair(ga, -1);
                   });
}

template <class S>
VarT<S> vlog(VarT<S> a) {
    auto* g = a.g;
    return g->make(a.val().array().log().matrix(), a.id, -1, g->rg(a.id),
                   [](GraphT<S>& gr, int self, int gid) {
                       auto& n = gr.nodes[static_cast<std::size_t>(self)];
                       int ga = -1;
                       if (gr.rg(n.a)) ga = mul(VarT<S>{&gr, gid}, reciprocal(VarT<S>{&gr, n.a})).id;
                       return std::make_pair(ga, -1);
                   });
}

template <class S>
VarT<S> vtanh(VarT<S> a) {
    auto* g = a.g;
    return g->make(a.val().array().tanh().matrix(), a.id, -1, g->rg(a.id),
                   [](GraphT<S>& gr, int self, int gid) {
                       auto& n = gr.nodes[static_cast<std::size_t>(self)];
                       int ga = -1;
                       if (gr.rg(n.a)) {
                           VarT<S> y{&gr, self}, gv{&gr, gid};
                           ga = mul(gv, add_scalar(neg(mul(y, y)), S(1))).id;
                       }
                       return std::make_pair(ga, -1);
                   });
}

template <class S>
VarT<S> sigmoid(VarT<S> a) {
    auto* g = a.g;
    MatT<S> y = ((-a.val().array()).exp() + S(1)).inverse().matrix();
    return g->make(std::move(y), a.id, -1, g->rg(a.id), [](GraphT<S>& gr, int self, int gid) {
        auto& n = gr.nodes[static_cast<std::size_t>(self)];
        int ga = -1;
        if (gr.rg(n.a)) {
            VarT<S> y{&gr, self}, gv{&gr, gid};
            ga = mul(gv, mul(y, add_scalar(neg(y), S(1)))).id;
        }
        return std::make_pair(ga, -1);
    });
}

namespace detail {
template <class S>
VarT<S> masked(VarT<S> a, MatT<S> mask_val) {
    auto* g = a.g;
    int mask = g->constant(std::move(mask_val)).id;
    return g->make(a.val().cwiseProduct(g->val(mask)), a.id, mask, g->rg(a.id),
                   [](GraphT<S>& gr, int self, int gid) {
                       auto& n = gr.nodes[static_cast<std::size_t>(self)];
                       int ga = -1;
                       if (gr.rg(n.a)) ga = mul(VarT<S>{&gr, gid}, VarT<S>{&gr, n.b}).id;
                       return std::make_pair(ga, -1);
                   });
}
}  // namespace detail

template <class S>
VarT<S> relu(VarT<S> a) {
    MatT<S> m = a.val().unaryExpr([](S v) { return v > S(0) ? S(1) : S(0); });
    return detail::masked(a, std::move(m));
}

template <class S>
VarT<S> leaky_relu(VarT<S> a, S slope) {
    MatT<S> m = a.val().unaryExpr([slope](S v) { return v > S(0) ? S(1) : slope; });
    return detail::masked(a, std::move(m));
}

template <class S>
VarT<S> vabs(VarT<S> a) {
    MatT<S> m = a.val().unaryExpr([](S v) { return v > S(0) ? S(1) : (v < S(0) ? S(-1) : S(0)); });
    return detail::masked(a, std::move(m));
}

// multiply by a fixed mask (dropout etc.); mask is a constant
template <class S>
VarT<S> apply_mask(VarT<S> a, MatT<S> mask) {
    return detail::masked(a, std::move(mask));
}

template <class S>
VarT<S> silu(VarT<S> a) {
    return mul(a, sigmoid(a));
}

// ------------------------------------------------------------- reductions

template <class S>
VarT<S> sum_all(VarT<S> a) {
    auto* g = a.g;
    MatT<S> s(1, 1);
    s(0, 0) = a.val().sum();
    long R = a.rows(), C = a.cols();
    return g->make(std::move(s), a.id, -1, g->rg(a.id),
                   [R, C](GraphT<S>& gr, int self, int gid) {
                       auto& n = gr.nodes[static_cast<std::size_t>(self)];
                       int ga = -1;
                       if (gr.rg(n.a)) {
                           VarT<S> gv{&gr, gid};
                           ga = matmul(matmul(gr.ones(R, 1), gv), gr.ones(1, C)).id;
                       }
                       return std::make_pair(ga, -1);
                   });
}

// collapse rows -> 1 x C
template <class S>
VarT<S> sum_rows(VarT<S> a) {
    auto* g = a.g;
    long R = a.rows();
    return g->make(a.val().colwise().sum(), a.id, -1, g->rg(a.id),
                   [R](GraphT<S>& gr, int self, int gid) {
                       auto& n = gr.nodes[static_cast<std::size_t>(self)];
                       int ga = -1;
                       if (gr.rg(n.a)) ga = matmul(gr.ones(R, 1), VarT<S>{&gr, gid}).id;
                       return std::make_pair(ga, -1);
                   });
}

// collapse cols -> R x 1
template <class S>
VarT<S> sum_cols(VarT<S> a) {
    auto* g = a.g;
    long C = a.cols();
    return g->make(a.val().rowwise().sum(), a.id, -1, g->rg(a.id),
                   [C](GraphT<S>& gr, int self, int gid) {
                       auto& n = gr.nodes[static_cast<std::size_t>(self)];
                       int ga = -1;
                       if (gr.rg(n.a)) ga = matmul(VarT<S>{&gr, gid}, gr.ones(1, C)).id;
                       return std::make_pair(ga, -1);
                   });
}

// ------------------------------------------------------------ shape ops

template <class S>
VarT<S> reshape(VarT<S> a, long r, long c) {
    auto* g = a.g;
    if (r * c != a.rows() * a.cols()) throw NnError("reshape: size mismatch");
    long R0 = a.rows(), C0 = a.cols();
    MatT<S> v(r, c);
    // row-major on both sides: linear storage order is the reshape order
    std::copy(a.val().data(), a.val().data() + r * c, v.data());
    return g->make(std::move(v), a.id, -1, g->rg(a.id),
                   [R0, C0](GraphT<S>& gr, int self, int gid) {
                       auto& n = gr.nodes[static_cast<std::size_t>(self)];
                       int ga = -1;
                       if (gr.rg(n.a)) ga = reshape(VarT<S>{&gr, gid}, R0, C0).id;
                       return std::make_pair(ga, -1);
                   });
}

template <class S>
VarT<S> pad_rows(VarT<S> a, long before, long after);

template <class S>
VarT<S> slice_rows(VarT<S> a, long r0, long nr) {
    auto* g = a.g;
    if (r0 < 0 || r0 + nr > a.rows()) throw NnError("slice_rows: out of range");
    long after = a.rows() - r0 - nr;
    return g->make(a.val().middleRows(r0, nr), a.id, -1, g->rg(a.id),
                   [r0, after](GraphT<S>& gr, int self, int gid) {
                       auto& n = gr.nodes[static_cast<std::size_t>(self)];
                       int ga = -1;
                       if (gr.rg(n.a)) ga = pad_rows(VarT<S>{&gr, gid}, r0, after).id;
                       return std::make_pair(ga, -1);
                   });
}

template <class S>
VarT<S> pad_rows(VarT<S> a, long before, long after) {
    auto* g = a.g;
    MatT<S> v = MatT<S>::Zero(before + a.rows() + after, a.cols());
    v.middleRows(before, a.rows()) = a.val();
    long nr = a.rows();
    return g->make(std::move(v), a.id, -1, g->rg(a.id),
                   [before, nr](GraphT<S>& gr, int self, int gid) {
                       auto& n = gr.nodes[static_cast<std::size_t>(self)];
                       int ga = -1;
                       if (gr.rg(n.a)) ga = slice_rows(VarT<S>{&gr, gid}, before, nr).id;
                       return std::make_pair(ga, -1);
                   });
}

template <class S>
VarT<S> pad_cols(VarT<S> a, long before, long after);

template <class S>
VarT<S> slice_cols(VarT<S> a, long c0, long nc) {
    auto* g = a.g;
    if (c0 < 0 || c0 + nc > a.cols()) throw NnError("slice_cols: out of range");
    long after = a.cols() - c0 - nc;
    return g->make(a.val().middleCols(c0, nc), a.id, -1, g->rg(a.id),
                   [c0, after](GraphT<S>& gr, int self, int gid) {
                       auto& n = gr.nodes[static_cast<std::size_t>(self)];
                       int ga = -1;
                       if (gr.rg(n.a)) ga = pad_cols(VarT<S>{&gr, gid}, c0, after).id;
                       return std::make_pair(ga, -1);
                   });
}

template <class S>
VarT<S> pad_cols(VarT<S> a, long before, long after) {
    auto* g = a.g;
    MatT<S> v = MatT<S>::Zero(a.rows(), before + a.cols() + after);
    v.middleCols(before, a.cols()) = a.val();
    long nc = a.cols();
    return g->make(std::move(v), a.id, -1, g->rg(a.id),
                   [before, nc](GraphT<S>& gr, int self, int gid) {
                       auto& n = gr.nodes[static_cast<std::size_t>(self)];
                       int ga = -1;
                       if (gr.rg(n.a)) ga = slice_cols(VarT<S>{&gr, gid}, before, nc).id;
                       return std::make_pair(ga, -1);
                   });
}

template <class S>
VarT<S> concat_rows(VarT<S> a, VarT<S> b) {
    auto* g = a.g;
    if (a.cols() != b.cols()) throw NnError("concat_rows: col mismatch");
    MatT<S> v(a.rows() + b.rows(), a.cols());
    v.topRows(a.rows()) = a.val();
    v.bottomRows(b.rows()) = b.val();
    long ra = a.rows(), rb = b.rows();
    return g->make(std::move(v), a.id, b.id, g->rg(a.id) || g->rg(b.id),
                   [ra, rb](GraphT<S>& gr, int self, int gid) {
                       auto& n = gr.nodes[static_cast<std::size_t>(self)];
                       int ga = -1, gb = -1;
                       if (gr.rg(n.a)) ga = slice_rows(VarT<S>{&gr, gid}, 0, ra).id;
                       if (gr.rg(n.b)) gb = slice_rows(VarT<S>{&gr, gid}, ra, rb).id;
                       return std::make_pair(ga, gb);
                   });
}

template <class S>
VarT<S> concat_cols(VarT<S> a, VarT<S> b) {
    auto* g = a.g;
    if (a.rows() != b.rows()) throw NnError("concat_cols: row mismatch");
    MatT<S> v(a.rows(), a.cols() + b.cols());
    v.leftCols(a.cols()) = a.val();
    v.rightCols(b.cols()) = b.val();
    long ca = a.cols(), cb = b.cols();
    return g->make(std::move(v), a.id, b.id, g->rg(a.id) || g->rg(b.id),
                   [ca, cb](GraphT<S>& gr, int self, int gid) {
                       auto& n = gr.nodes[static_cast<std::size_t>(self)];
                       int ga = -1, gb = -1;
                       if (gr.rg(n.a)) ga = slice_cols(VarT<S>{&gr, gid}, 0, ca).id;
                       if (gr.rg(n.b)) gb = slice_cols(VarT<S>{&gr, gid}, ca, cb).id;
                       return std::make_pair(ga, gb);
                   });
}

template <class S>
VarT<S> permute_rows(VarT<S> a, const std::vector<long>& perm) {
    auto* g = a.g;
    if (static_cast<long>(perm.size()) != a.rows()) throw NnError("permute_rows: size mismatch");
    MatT<S> v(a.rows(), a.cols());
    for (long i = 0; i < a.rows(); ++i) v.row(i) = a.val().row(perm[static_cast<std::size_t>(i)]);
    std::vector<long> inv(perm.size());
    for (long i = 0; i < static_cast<long>(perm.size()); ++i)
        inv[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = i;
    return g->make(std::move(v), a.id, -1, g->rg(a.id),
                   [inv](GraphT<S>& gr, int self, int gid) {
                       auto& n = gr.nodes[static_cast<std::size_t>(self)];
                       int ga = -1;
                       if (gr.rg(n.a)) ga = permute_rows(VarT<S>{&gr, gid}, inv).id;
                       return std::make_pair(ga, -1);
                   });
}

// --------------------------------------------------------------- broadcast

// 1 x C row vector -> R x C
template <class S>
VarT<S> bc_row(VarT<S> v, long R) {
    return matmul(v.g->ones(R, 1), v);
}

// R x 1 col vector -> R x C
template <class S>
VarT<S> bc_col(VarT<S> v, long C) {
    return matmul(v, v.g->ones(1, C));
}

// row-wise softmax with a detached max shift (softmax(x - c) == softmax(x))
template <class S>
VarT<S> softmax_rows(VarT<S> a) {
    auto* g = a.g;
    MatT<S> mx = a.val().rowwise().maxCoeff();
    VarT<S> shifted = sub(a, bc_col(g->constant(std::move(mx)), a.cols()));
    VarT<S> e = vexp(shifted);
    return mul(e, bc_col(reciprocal(sum_cols(e)), a.cols()));
}

// ------------------------------------------------------------------ conv1d
//
// x: (B, Cin, L) as (B*Cin) x L; w: Cout x (Cin*k); y: (B, Cout, Lout) as
// (B*Cout) x Lout.  The three kernels below form a closed bilinear family:
// each one's vjps are expressed with the other two, so any order of
// differentiation works.

struct ConvMeta {
    long B, Cin, Cout, k, stride, pad, dil, Lin, Lout;
};

inline long conv_out_len(long Lin, long k, long stride, long pad, long dil) {
    long eff = (k - 1) * dil + 1;
    long span = Lin + 2 * pad - eff;
    if (span < 0) throw NnError("conv1d: kernel longer than padded input");
    return span / stride + 1;
}

namespace detail {

// gather x into columns: Xcol((Cin*k) x (B*Lout)), column b*Lout+l
template <class S>
MatT<S> im2col(const MatT<S>& x, const ConvMeta& m) {
    MatT<S> xc = MatT<S>::Zero(m.Cin * m.k, m.B * m.Lout);
    for (long b = 0; b < m.B; ++b)
        for (long c = 0; c < m.Cin; ++c) {
            const S* row = x.row(b * m.Cin + c).data();
            for (long j = 0; j < m.k; ++j) {
                S* dst = xc.row(c * m.k + j).data() + b * m.Lout;
                for (long l = 0; l < m.Lout; ++l) {
                    long src = l * m.stride + j * m.dil - m.pad;
                    if (src >= 0 && src < m.Lin) dst[l] = row[src];
                }
            }
        }
    return xc;
}

// scatter-add columns back into x layout
template <class S>
void col2im(const MatT<S>& xc, const ConvMeta& m, MatT<S>& x) {
    for (long b = 0; b < m.B; ++b)
        for (long c = 0; c < m.Cin; ++c) {
            S* row = x.row(b * m.Cin + c).data();
            for (long j = 0; j < m.k; ++j) {
                const S* src = xc.row(c * m.k + j).data() + b * m.Lout;
                for (long l = 0; l < m.Lout; ++l) {
                    long dst = l * m.stride + j * m.dil - m.pad;
                    if (dst >= 0 && dst < m.Lin) row[dst] += src[l];
                }
            }
        }
}

// (B*Cout) x Lout  <->  Cout x (B*Lout)
template <class S>
MatT<S> fold_batch(const MatT<S>& y2, const ConvMeta& m) {
    MatT<S> y(m.B * m.Cout, m.Lout);
    for (long b = 0; b < m.B; ++b)
        y.middleRows(b * m.Cout, m.Cout) = y2.middleCols(b * m.Lout, m.Lout);
    return y;
}

template <class S>
MatT<S> unfold_batch(const MatT<S>& y, const ConvMeta& m) {
    MatT<S> y2(m.Cout, m.B * m.Lout);
    for (long b = 0; b < m.B; ++b)
        y2.middleCols(b * m.Lout, m.Lout) = y.middleRows(b * m.Cout, m.Cout);
    return y2;
}

template <class S>
MatT<S> conv1d_eval(const MatT<S>& x, const MatT<S>& w, const ConvMeta& m) {
    MatT<S> y2 = w * im2col(x, m);
    return fold_batch(y2, m);
}

template <class S>
MatT<S> conv1d_bwd_data_eval(const MatT<S>& gy, const MatT<S>& w, const ConvMeta& m) {
    MatT<S> g2 = unfold_batch(gy, m);
    MatT<S> gcol = w.transpose() * g2;
    MatT<S> gx = MatT<S>::Zero(m.B * m.Cin, m.Lin);
    col2im(gcol, m, gx);
    return gx;
}

template <class S>
MatT<S> conv1d_bwd_weight_eval(const MatT<S>& x, const MatT<S>& gy, const ConvMeta& m) {
    MatT<S> g2 = unfold_batch(gy, m);
    return g2 * im2col(x, m).transpose();
}

}  // namespace detail

template <class S>
VarT<S> conv1d_bwd_data(VarT<S> gy, VarT<S> w, ConvMeta m);
template <class S>
VarT<S> conv1d_bwd_weight(VarT<S> x, VarT<S> gy, ConvMeta m);

template <class S>
VarT<S> conv1d(VarT<S> x, VarT<S> w, ConvMeta m) {
    auto* g = x.g;
    m.Lout = conv_out_len(m.Lin, m.k, m.stride, m.pad, m.dil);
    if (x.rows() != m.B * m.Cin || x.cols() != m.Lin) throw NnError("conv1d: bad input shape");
    if (w.rows() != m.Cout || w.cols() != m.Cin * m.k) throw NnError("conv1d: bad weight shape");
    return g->make(detail::conv1d_eval(x.val(), w.val(), m), x.id, w.id,
                   g->rg(x.id) || g->rg(w.id), [m](GraphT<S>& gr, int self, int gid) {
                       auto& n = gr.nodes[static_cast<std::size_t>(self)];
                       int gx = -1, gw = -1;
                       VarT<S> gv{&gr, gid};
                       if (gr.rg(n.a)) gx = conv1d_bwd_data(gv, VarT<S>{&gr, n.b}, m).id;
                       if (gr.rg(n.b)) gw = conv1d_bwd_weight(VarT<S>{&gr, n.a}, gv, m).id;
                       return std::make_pair(gx, gw);
                   });
}

template <class S>
VarT<S> conv1d_bwd_data(VarT<S> gy, VarT<S> w, ConvMeta m) {
    auto* g = gy.g;
    m.Lout = conv_out_len(m.Lin, m.k, m.stride, m.pad, m.dil);
    if (gy.rows() != m.B * m.Cout || gy.cols() != m.Lout)
        throw NnError("conv1d_bwd_data: bad input shape");
    return g->make(detail::conv1d_bwd_data_eval(gy.val(), w.val(), m), gy.id, w.id,
                   g->rg(gy.id) || g->rg(w.id), [m](GraphT<S>& gr, int self, int gid) {
                       auto& n = gr.nodes[static_cast<std::size_t>(self)];
                       int ggy = -1, gw = -1;
                       VarT<S> u{&gr, gid};  // shaped like x
                       if (gr.rg(n.a)) ggy = conv1d(u, VarT<S>{&gr, n.b}, m).id;
                       if (gr.rg(n.b)) gw = conv1d_bwd_weight(u, VarT<S>{&gr, n.a}, m).id;
                       return std::make_pair(ggy, gw);
                   });
}

template <class S>
VarT<S> conv1d_bwd_weight(VarT<S> x, VarT<S> gy, ConvMeta m) {
    auto* g = x.g;
    m.Lout = conv_out_len(m.Lin, m.k, m.stride, m.pad, m.dil);
    return g->make(detail::conv1d_bwd_weight_eval(x.val(), gy.val(), m), x.id, gy.id,
                   g->rg(x.id) || g->rg(gy.id), [m](GraphT<S>& gr, int self, int gid) {
                       auto& n = gr.nodes[static_cast<std::size_t>(self)];
                       int gx = -1, ggy = -1;
                       VarT<S> uw{&gr, gid};  // shaped like w
                       if (gr.rg(n.a)) gx = conv1d_bwd_data(VarT<S>{&gr, n.b}, uw, m).id;
                       if (gr.rg(n.b)) ggy = conv1d(VarT<S>{&gr, n.a}, uw, m).id;
                       return std::make_pair(gx, ggy);
                   });
}

// ---------------------------------------------------------------- backward

// gradients of a scalar loss w.r.t. wrt; outputs are graph vars, so they can
// be composed into further losses and differentiated again
template <class S>
std::vector<VarT<S>> grad(VarT<S> loss, const std::vector<VarT<S>>& wrt) {
    auto* g = loss.g;
    if (loss.rows() != 1 || loss.cols() != 1) throw NnError("grad: loss must be scalar");
    int n = loss.id + 1;
    std::vector<int> adj(static_cast<std::size_t>(n), -1);
    {
        MatT<S> one(1, 1);
        one(0, 0) = S(1);
        adj[static_cast<std::size_t>(loss.id)] = g->constant(std::move(one)).id;
    }
    for (int i = loss.id; i >= 0; --i) {
        int gi = adj[static_cast<std::size_t>(i)];
        if (gi < 0) continue;
        auto& node = g->nodes[static_cast<std::size_t>(i)];
        if (!node.rg || !node.back) continue;
        auto [ga, gb] = node.back(*g, i, gi);
        auto accumulate = [&](int input, int gr_id) {
            if (input < 0 || gr_id < 0 || input >= n) return;
            int& slot = adj[static_cast<std::size_t>(input)];
            slot = slot < 0 ? gr_id : add(VarT<S>{g, slot}, VarT<S>{g, gr_id}).id;
        };
        accumulate(node.a, ga);
        accumulate(node.b, gb);
    }
    std::vector<VarT<S>> out;
    out.reserve(wrt.size());
    for (const auto& w : wrt) {
        int a = (w.id < n) ? adj[static_cast<std::size_t>(w.id)] : -1;
        if (a >= 0)
            out.push_back(VarT<S>{g, a});
        else
            out.push_back(g->zeros(w.rows(), w.cols()));
    }
    return out;
}

using Graph = GraphT<float>;
using Var = VarT<float>;
using MatF = MatT<float>;

}  // namespace fedgen::nn
