#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "srs/autodiff.hpp"
#include "srs/params.hpp"
#include "srs/rng.hpp"

namespace srs {

/// Glorot-uniform initialization for an affine weight of shape (out, in).
Tensor glorot(Rng& rng, int out_dim, int in_dim);
/// Glorot-uniform for a 3x3 conv weight of shape (co, ci, 3, 3).
Tensor glorot_conv(Rng& rng, int co, int ci);
/// Uniform(-scale, scale) initialization (embeddings).
Tensor uniform_init(Rng& rng, std::vector<int> shape, double scale);

/// Dropout context: when rng is null (evaluation, gradient checks) dropout is
/// the identity; otherwise inverted dropout with the given drop probability.
struct DropoutCtx {
    double drop_prob = 0.0;
    Rng* rng = nullptr;

    bool live() const { return rng != nullptr && drop_prob > 0.0; }
    /// Applies dropout to `x` on its tape, drawing a fresh keep mask.
    Var apply(Tape& t, Var x) const;
};

/// Gated recurrent unit with fused input: each gate reads concat(x, h).
/// With all-zero parameters, the update gate is 0.5 and the candidate 0, so
/// one step maps state s to 0.5*s.
struct GruCell {
    int in_dim = 0;
    int state_dim = 0;
    std::string w_z, b_z, w_r, b_r, w_c, b_c;

    static GruCell create(ParamStore& ps, Rng& rng, const std::string& prefix, int in_dim,
                          int state_dim);

    Var step(Tape& t, ParamBinding& pb, Var x, Var h) const;
    /// Runs over a sequence from a zero initial state; returns all states.
    std::vector<Var> run(Tape& t, ParamBinding& pb, const std::vector<Var>& xs) const;
};

/// Self-attention block: Q/K/V projections, unscaled dot-product attention,
/// residual + dropout, position-wise FFN with ReLU, layer norm on the FFN
/// output. Rows with mask 0 are excluded as keys and zeroed in the output.
struct AttentionBlock {
    int d = 0;
    std::string w_q, b_q, w_k, b_k, w_v, b_v;
    std::string w_f1, b_f1, w_f2, b_f2;
    std::string ln_g, ln_b;

    static AttentionBlock create(ParamStore& ps, Rng& rng, const std::string& prefix, int d);

    /// x: (T, d); mask: length T (1 = real position). If `attn_out` is given
    /// it receives the (T, T) attention matrix. `scaled` divides logits by
    /// sqrt(d) (off by default to match the written formula).
    Var apply(Tape& t, ParamBinding& pb, Var x, const std::vector<std::uint8_t>& mask,
              const DropoutCtx& drop, double ln_eps, bool scaled = false,
              Tensor* attn_out = nullptr) const;
};

/// (T, d) tensor whose masked rows are zeroed: x * mask-per-row.
Var zero_masked_rows(Tape& t, Var x, const std::vector<std::uint8_t>& mask);

}  // namespace srs
