#include "srs/nn.hpp"

#include <cmath>

namespace srs {

Tensor glorot(Rng& rng, int out_dim, int in_dim) {
    const double limit = std::sqrt(6.0 / (in_dim + out_dim));
    return uniform_init(rng, {out_dim, in_dim}, limit);
}

Tensor glorot_conv(Rng& rng, int co, int ci) {
    const double limit = std::sqrt(6.0 / (ci * 9 + co * 9));
    return uniform_init(rng, {co, ci, 3, 3}, limit);
}

Tensor uniform_init(Rng& rng, std::vector<int> shape, double scale) {
    Tensor t(std::move(shape));
    for (int i = 0; i < t.size(); ++i) t[i] = rng.uniform(-scale, scale);
    return t;
}

Var DropoutCtx::apply(Tape& t, Var x) const {
    if (!live()) return x;
    const double keep = 1.0 - drop_prob;
    Tensor mask(x.value().shape());
    for (int i = 0; i < mask.size(); ++i) mask[i] = rng->uniform() < keep ? 1.0 : 0.0;
    return ops::dropout(x, std::move(mask), keep);
}

GruCell GruCell::create(ParamStore& ps, Rng& rng, const std::string& prefix, int in_dim,
                        int state_dim) {
    GruCell c;
    c.in_dim = in_dim;
    c.state_dim = state_dim;
    c.w_z = prefix + ".wz";
    c.b_z = prefix + ".bz";
    c.w_r = prefix + ".wr";
    c.b_r = prefix + ".br";
    c.w_c = prefix + ".wc";
    c.b_c = prefix + ".bc";
    ps.add(c.w_z, glorot(rng, state_dim, in_dim + state_dim));
    ps.add(c.b_z, Tensor({state_dim}));
    ps.add(c.w_r, glorot(rng, state_dim, in_dim + state_dim));
    ps.add(c.b_r, Tensor({state_dim}));
    ps.add(c.w_c, glorot(rng, state_dim, in_dim + state_dim));
    ps.add(c.b_c, Tensor({state_dim}));
    return c;
}

Var GruCell::step(Tape& t, ParamBinding& pb, Var x, Var h) const {
    Var xh = ops::concat({x, h});
    Var z = ops::sigmoid(ops::linear(xh, pb(w_z), pb(b_z)));
    Var r = ops::sigmoid(ops::linear(xh, pb(w_r), pb(b_r)));
    Var cand = ops::tanh(ops::linear(ops::concat({x, ops::mul(r, h)}), pb(w_c), pb(b_c)));
    // h' = (1 - z) * h + z * cand
    Var one = t.leaf(Tensor::full({state_dim}, 1.0));
    return ops::add(ops::mul(ops::sub(one, z), h), ops::mul(z, cand));
}

std::vector<Var> GruCell::run(Tape& t, ParamBinding& pb, const std::vector<Var>& xs) const {
    if (xs.empty()) throw DimensionError("GRU over empty sequence");
    std::vector<Var> states;
    states.reserve(xs.size());
    Var h = t.leaf(Tensor({state_dim}));
    for (const Var& x : xs) {
        h = step(t, pb, x, h);
        states.push_back(h);
    }
    return states;
}

AttentionBlock AttentionBlock::create(ParamStore& ps, Rng& rng, const std::string& prefix, int d) {
    AttentionBlock b;
    b.d = d;
    b.w_q = prefix + ".wq";
    b.b_q = prefix + ".bq";
    b.w_k = prefix + ".wk";
    b.b_k = prefix + ".bk";
    b.w_v = prefix + ".wv";
    b.b_v = prefix + ".bv";
    b.w_f1 = prefix + ".wf1";
    b.b_f1 = prefix + ".bf1";
    b.w_f2 = prefix + ".wf2";
    b.b_f2 = prefix + ".bf2";
    b.ln_g = prefix + ".lng";
    b.ln_b = prefix + ".lnb";
    ps.add(b.w_q, glorot(rng, d, d));
    ps.add(b.b_q, Tensor({d}));
    ps.add(b.w_k, glorot(rng, d, d));
    ps.add(b.b_k, Tensor({d}));
    ps.add(b.w_v, glorot(rng, d, d));
    ps.add(b.b_v, Tensor({d}));
    ps.add(b.w_f1, glorot(rng, d, d));
    ps.add(b.b_f1, Tensor({d}));
    ps.add(b.w_f2, glorot(rng, d, d));
    ps.add(b.b_f2, Tensor({d}));
    ps.add(b.ln_g, Tensor::full({d}, 1.0));
    ps.add(b.ln_b, Tensor({d}));
    return b;
}

Var AttentionBlock::apply(Tape& t, ParamBinding& pb, Var x, const std::vector<std::uint8_t>& mask,
                          const DropoutCtx& drop, double ln_eps, bool scaled,
                          Tensor* attn_out) const {
    Var q = ops::linear(x, pb(w_q), pb(b_q));
    Var k = ops::linear(x, pb(w_k), pb(b_k));
    Var v = ops::linear(x, pb(w_v), pb(b_v));
    Var scores = ops::matmul_nt(q, k);
    if (scaled) scores = ops::scale(scores, 1.0 / std::sqrt(static_cast<double>(d)));
    Var attn = ops::masked_softmax_rows(scores, mask, mask);
    if (attn_out != nullptr) *attn_out = attn.value();
    Var beta = ops::matmul(attn, v);
    Var hhat = drop.apply(t, ops::add(x, beta));
    Var inner = ops::relu(ops::linear(hhat, pb(w_f1), pb(b_f1)));
    Var ffn = ops::linear(inner, pb(w_f2), pb(b_f2));
    Var normed = ops::layer_norm_rows(ffn, pb(ln_g), pb(ln_b), ln_eps);
    return zero_masked_rows(t, normed, mask);
}

Var zero_masked_rows(Tape& t, Var x, const std::vector<std::uint8_t>& mask) {
    const int rows = x.value().dim(0), cols = x.value().dim(1);
    if (static_cast<int>(mask.size()) != rows)
        throw DimensionError("zero_masked_rows: mask length mismatch");
    bool all_real = true;
    for (std::uint8_t m : mask) all_real = all_real && m;
    if (all_real) return x;
    Tensor mt({rows, cols});
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) mt.at(i, j) = mask[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    return ops::mul(x, t.leaf(std::move(mt)));
}

}  // namespace srs
