#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "srs/autodiff.hpp"
#include "srs/corpus.hpp"
#include "srs/nn.hpp"
#include "srs/params.hpp"

namespace srs {

/// Hyperparameters and structural switches for the selector model. The
/// ablation flags change which parameters exist, so a checkpoint carries its
/// config and refuses to load into a differently shaped model.
struct ModelConfig {
    int vocab_size = 0;
    int d = 100;               // hidden size; word embeddings share it
    int p = 4;                 // sticker grid is p x p
    int t_x = 30;              // tokens kept per utterance
    int max_utterances = 20;   // dialog turns kept per context
    int k_emoji = 10;          // emoji classes for the auxiliary head
    std::vector<int> conv_channels = {3, 6, 9, 12};  // 4 stride-2 stages
    double dropout = 0.1;
    double ln_eps = 1e-6;
    bool scale_attention = false;  // divide attention logits by sqrt(d)
    bool normalize_tau = false;    // softmax the pooled interaction weights
    bool no_classify = false;      // drop the emoji classification head
    bool no_din = false;           // bypass the deep interaction network
    bool no_fusion_rnn = false;    // zero the short-term fusion branch

    /// Tiny geometry for gradient checks: d=8, p=2, t_x=5, 3 emoji classes.
    static ModelConfig micro(int vocab_size);
    /// Desk-scale geometry used by the synthetic-learnability runs.
    static ModelConfig desk(int vocab_size);

    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

/// Dual sticker representation: spatial grid O (p^2, d) and flat vector (d).
struct StickerRepr {
    Var grid;
    Var flat;
};

/// Contextualized utterance: hidden states (t_x, d) with masked rows zeroed.
struct UtteranceRepr {
    Var h;
    std::vector<std::uint8_t> mask;
    int real_count = 0;
};

/// Intermediate quantities of the deep interaction network for one
/// (sticker, utterance) pair. All live on the evaluation tape.
struct InteractionState {
    Var M;      // (p^2, t_x) relation matrix, masked word columns zero
    Var tau_u;  // (t_x) column maxima (word weights)
    Var tau_s;  // (p^2) row maxima (grid-cell weights)
    Var l;      // (d) sticker-aware utterance vector
    Var r;      // (d) utterance-aware sticker vector
    Var Q1;     // (d) integrate(flat, r)
    Var Q2;     // (d) combine(Q1, l)
};

/// Recorded fusion pipeline values for one candidate (evaluation artifact).
struct FusionTrace {
    std::vector<Tensor> g;       // fusion RNN states
    std::vector<Tensor> g_hat;   // fusion transformer outputs
    std::vector<Tensor> g_bar;   // SUBMULTI merges
    Tensor g_tilde_last;         // final prediction-RNN state
    double score = 0.0;
};

/// Optional observation points filled in by score_candidate.
struct ScoreProbes {
    std::vector<InteractionState>* interactions = nullptr;  // one per utterance
    Tensor* fusion_attention = nullptr;                     // (U, U)
    FusionTrace* trace = nullptr;
};

/// The sticker response selector: encoder, deep interaction and fusion
/// stages over a shared ParamStore. Forward passes run on caller-provided
/// tapes so training can split sticker and context graphs.
class Model {
public:
    Model(ModelConfig cfg, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    /// Conv stack -> adaptive pool -> grid projection; flat = affine of the
    /// grid's global average. Image must be (1, s, s) with s >= 16 p.
    StickerRepr encode_sticker(Tape& t, ParamBinding& pb, const Tensor& image) const;

    /// Emoji logits (k_emoji) from the flat vector. Requires the head.
    Var classify_logits(Tape& t, ParamBinding& pb, Var flat) const;

    /// Embedding -> self-attention block. All-pad utterances come back as
    /// all-zero h. `attn_out` receives the (t_x, t_x) attention weights.
    UtteranceRepr encode_utterance(Tape& t, ParamBinding& pb, const Utterance& utt,
                                   const DropoutCtx& drop,
                                   Tensor* attn_out = nullptr) const;

    /// Deep interaction network for one (sticker, utterance) pair.
    InteractionState interact(Tape& t, ParamBinding& pb, const StickerRepr& sticker,
                              const UtteranceRepr& utt) const;

    /// Full per-candidate score in (0,1): per-utterance interaction vectors
    /// fused by the RNN + self-attention branches, SUBMULTI, the prediction
    /// RNN and the sigmoid head. Returns a scalar Var.
    Var score_candidate(Tape& t, ParamBinding& pb, const StickerRepr& sticker,
                        const std::vector<UtteranceRepr>& utts, const DropoutCtx& drop,
                        ScoreProbes* probes = nullptr) const;

private:
    Var q2_for_utterance(Tape& t, ParamBinding& pb, const StickerRepr& sticker,
                         const UtteranceRepr& utt, InteractionState* state) const;

    ModelConfig cfg_;
    ParamStore params_;
    AttentionBlock utt_attn_;
    AttentionBlock fusion_attn_;
    GruCell fusion_rnn_;  // unused when no_fusion_rnn
    GruCell pred_rnn_;
};

}  // namespace srs
