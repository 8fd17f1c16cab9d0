#include "srs/model.hpp"

#include <cmath>

#include "srs/errors.hpp"

namespace srs {

using nlohmann::json;
namespace od = srs::ops;

ModelConfig ModelConfig::micro(int vocab_size) {
    ModelConfig c;
    c.vocab_size = vocab_size;
    c.d = 8;
    c.p = 2;
    c.t_x = 5;
    c.max_utterances = 3;
    c.k_emoji = 3;
    c.conv_channels = {2, 3, 4, 4};
    c.dropout = 0.0;
    return c;
}

ModelConfig ModelConfig::desk(int vocab_size) {
    ModelConfig c;
    c.vocab_size = vocab_size;
    c.d = 16;
    c.p = 4;
    c.t_x = 10;
    c.max_utterances = 20;
    c.k_emoji = 10;
    c.conv_channels = {3, 6, 9, 12};
    c.dropout = 0.1;
    return c;
}

json ModelConfig::to_json() const {
    json j;
    j["vocab_size"] = vocab_size;
    j["d"] = d;
    j["p"] = p;
    j["t_x"] = t_x;
    j["max_utterances"] = max_utterances;
    j["k_emoji"] = k_emoji;
    j["conv_channels"] = conv_channels;
    j["dropout"] = dropout;
    j["ln_eps"] = ln_eps;
    j["scale_attention"] = scale_attention;
    j["normalize_tau"] = normalize_tau;
    j["no_classify"] = no_classify;
    j["no_din"] = no_din;
    j["no_fusion_rnn"] = no_fusion_rnn;
    return j;
}

ModelConfig ModelConfig::from_json(const json& j) {
    ModelConfig c;
    try {
        c.vocab_size = j.at("vocab_size").get<int>();
        c.d = j.at("d").get<int>();
        c.p = j.at("p").get<int>();
        c.t_x = j.at("t_x").get<int>();
        c.max_utterances = j.at("max_utterances").get<int>();
        c.k_emoji = j.at("k_emoji").get<int>();
        c.conv_channels = j.at("conv_channels").get<std::vector<int>>();
        c.dropout = j.at("dropout").get<double>();
        c.ln_eps = j.at("ln_eps").get<double>();
        c.scale_attention = j.at("scale_attention").get<bool>();
        c.normalize_tau = j.at("normalize_tau").get<bool>();
        c.no_classify = j.at("no_classify").get<bool>();
        c.no_din = j.at("no_din").get<bool>();
        c.no_fusion_rnn = j.at("no_fusion_rnn").get<bool>();
    } catch (const json::exception& e) {
        throw IoError(std::string("bad model config: ") + e.what());
    }
    return c;
}

namespace {

void check_config(const ModelConfig& c) {
    if (c.vocab_size < 2) throw DimensionError("model: vocab_size must be at least 2");
    if (c.d < 1 || c.p < 1 || c.t_x < 1 || c.max_utterances < 1)
        throw DimensionError("model: d, p, t_x and max_utterances must be positive");
    if (!c.no_classify && c.k_emoji < 2)
        throw DimensionError("model: k_emoji must be at least 2");
    if (c.conv_channels.size() != 4)
        throw DimensionError("model: exactly four conv stages expected");
    for (int ch : c.conv_channels)
        if (ch < 1) throw DimensionError("model: conv channels must be positive");
    if (c.dropout < 0.0 || c.dropout >= 1.0)
        throw DimensionError("model: dropout must lie in [0, 1)");
}

}  // namespace

Model::Model(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    check_config(cfg_);
    Rng rng(mix_seed(seed, 0x6d6f64656cULL));
    const int d = cfg_.d;

    params_.add("embed", uniform_init(rng, {cfg_.vocab_size, d}, 0.1));

    int cin = 1;
    for (int s = 0; s < 4; ++s) {
        int cout = cfg_.conv_channels[static_cast<size_t>(s)];
        std::string base = "conv" + std::to_string(s + 1);
        params_.add(base + ".w", glorot_conv(rng, cout, cin));
        params_.add(base + ".b", Tensor({cout}));
        cin = cout;
    }
    params_.add("grid_proj.w", glorot(rng, d, cin));
    params_.add("grid_proj.b", Tensor({d}));
    params_.add("flat_proj.w", glorot(rng, d, d));
    params_.add("flat_proj.b", Tensor({d}));

    if (!cfg_.no_classify) {
        params_.add("emoji_head.w", glorot(rng, cfg_.k_emoji, d));
        params_.add("emoji_head.b", Tensor({cfg_.k_emoji}));
    }

    utt_attn_ = AttentionBlock::create(params_, rng, "utt_attn", d);

    if (!cfg_.no_din) {
        params_.add("din.w", glorot(rng, 1, 3 * d).reshaped({3 * d}));
        params_.add("din.if_w", glorot(rng, d, 4 * d));
        params_.add("din.if_b", Tensor({d}));
        params_.add("din.q2_w", glorot(rng, d, 2 * d));
        params_.add("din.q2_b", Tensor({d}));
    } else {
        params_.add("din_bypass.w", glorot(rng, d, 2 * d));
        params_.add("din_bypass.b", Tensor({d}));
    }

    if (!cfg_.no_fusion_rnn)
        fusion_rnn_ = GruCell::create(params_, rng, "fusion_rnn", d, d);
    fusion_attn_ = AttentionBlock::create(params_, rng, "fusion_attn", d);
    params_.add("submulti.w", glorot(rng, d, 2 * d));
    params_.add("submulti.b", Tensor({d}));
    pred_rnn_ = GruCell::create(params_, rng, "pred_rnn", d, d);
    params_.add("score.w", glorot(rng, 1, d));
    params_.add("score.b", Tensor({1}));
}

StickerRepr Model::encode_sticker(Tape& t, ParamBinding& pb, const Tensor& image) const {
    if (image.rank() != 3 || image.dim(0) != 1)
        throw DimensionError("encode_sticker: (1,h,w) image required, got " +
                             image.shape_str());
    if (image.dim(1) < 16 * cfg_.p || image.dim(2) < 16 * cfg_.p)
        throw DimensionError("encode_sticker: image side must be at least 16*p for the "
                             "four stride-2 stages, got " + image.shape_str());

    Var x = t.leaf(image);
    for (int s = 0; s < 4; ++s) {
        std::string base = "conv" + std::to_string(s + 1);
        x = od::tanh(od::conv2d_s2(x, pb(base + ".w"), pb(base + ".b")));
    }
    x = od::adaptive_avg_pool(x, cfg_.p);  // (c4, p, p)
    const int c4 = cfg_.conv_channels[3];
    Var cells = od::transpose(od::reshape(x, {c4, cfg_.p * cfg_.p}));  // (p^2, c4)
    Var grid = od::linear(cells, pb("grid_proj.w"), pb("grid_proj.b"));  // (p^2, d)

    std::vector<std::uint8_t> all(static_cast<size_t>(cfg_.p * cfg_.p), 1);
    Var pooled = od::mean_rows_masked(grid, all);  // (d)
    Var flat = od::linear(pooled, pb("flat_proj.w"), pb("flat_proj.b"));
    return {grid, flat};
}

Var Model::classify_logits(Tape& t, ParamBinding& pb, Var flat) const {
    (void)t;
    if (cfg_.no_classify)
        throw DimensionError("classify_logits: model built without the emoji head");
    return od::linear(flat, pb("emoji_head.w"), pb("emoji_head.b"));
}

UtteranceRepr Model::encode_utterance(Tape& t, ParamBinding& pb, const Utterance& utt,
                                      const DropoutCtx& drop, Tensor* attn_out) const {
    if (utt.length() != cfg_.t_x)
        throw DimensionError("encode_utterance: expected " + std::to_string(cfg_.t_x) +
                             " tokens, got " + std::to_string(utt.length()));
    for (int id : utt.ids)
        if (id < 0 || id >= cfg_.vocab_size)
            throw DimensionError("encode_utterance: token id " + std::to_string(id) +
                                 " outside vocabulary");
    Var e = od::gather_rows(pb("embed"), utt.ids);  // (t_x, d)
    Var h = utt_attn_.apply(t, pb, e, utt.mask, drop, cfg_.ln_eps, cfg_.scale_attention,
                            attn_out);
    UtteranceRepr rep;
    rep.h = h;
    rep.mask = utt.mask;
    rep.real_count = utt.real_count();
    return rep;
}

InteractionState Model::interact(Tape& t, ParamBinding& pb, const StickerRepr& sticker,
                                 const UtteranceRepr& utt) const {
    if (cfg_.no_din)
        throw DimensionError("interact: model built with the interaction network bypassed");
    InteractionState st;
    const int d = cfg_.d;
    const int cells = cfg_.p * cfg_.p;
    const int t_x = cfg_.t_x;

    if (utt.real_count == 0) {
        // No words to relate to: weights and pooled vectors are all zero,
        // only the sticker's flat path feeds Q1/Q2.
        st.M = t.leaf(Tensor({cells, t_x}));
        st.tau_u = t.leaf(Tensor({t_x}));
        st.tau_s = t.leaf(Tensor({cells}));
        st.l = t.leaf(Tensor({d}));
        st.r = t.leaf(Tensor({d}));
    } else {
        st.M = od::relation_matrix(sticker.grid, utt.h, pb("din.w"), utt.mask);
        Var tau_u = od::col_max_masked(st.M, utt.mask);
        Var tau_s = od::row_max_masked(st.M, utt.mask);
        if (cfg_.normalize_tau) {
            // Optional softmax over the pooled weights (off by default: the
            // raw maxima are used as weights directly).
            Var tu = od::masked_softmax_rows(od::reshape(tau_u, {1, t_x}), utt.mask, {1});
            tau_u = od::reshape(tu, {t_x});
            tau_s = od::softmax(tau_s);
        }
        st.tau_u = tau_u;
        st.tau_s = tau_s;
        st.l = od::vecmat(st.tau_u, utt.h);
        st.r = od::vecmat(st.tau_s, sticker.grid);
    }

    Var x = sticker.flat, y = st.r;
    Var if_in = od::concat({x, y, od::mul(x, y), od::add(x, y)});
    st.Q1 = od::linear(if_in, pb("din.if_w"), pb("din.if_b"));
    st.Q2 = od::linear(od::concat({st.Q1, st.l}), pb("din.q2_w"), pb("din.q2_b"));
    return st;
}

Var Model::q2_for_utterance(Tape& t, ParamBinding& pb, const StickerRepr& sticker,
                            const UtteranceRepr& utt, InteractionState* state) const {
    if (!cfg_.no_din) {
        InteractionState st = interact(t, pb, sticker, utt);
        if (state) *state = st;
        return st.Q2;
    }
    Var pooled = od::mean_rows_masked(utt.h, utt.mask);  // zeros for all-pad
    Var q2 = od::linear(od::concat({sticker.flat, pooled}), pb("din_bypass.w"),
                        pb("din_bypass.b"));
    if (state) *state = InteractionState{};
    return q2;
}

Var Model::score_candidate(Tape& t, ParamBinding& pb, const StickerRepr& sticker,
                           const std::vector<UtteranceRepr>& utts, const DropoutCtx& drop,
                           ScoreProbes* probes) const {
    if (utts.empty())
        throw DimensionError("score_candidate: at least one utterance required");
    const int u_count = static_cast<int>(utts.size());
    if (u_count > cfg_.max_utterances)
        throw DimensionError("score_candidate: " + std::to_string(u_count) +
                             " utterances exceed max_utterances " +
                             std::to_string(cfg_.max_utterances));

    std::vector<Var> q2s;
    q2s.reserve(utts.size());
    for (const auto& utt : utts) {
        InteractionState st;
        Var q2 = q2_for_utterance(t, pb, sticker, utt,
                                  probes && probes->interactions ? &st : nullptr);
        if (probes && probes->interactions) probes->interactions->push_back(st);
        q2s.push_back(q2);
    }

    // Short-term branch: GRU over the interaction vectors (or zeros when
    // ablated away).
    std::vector<Var> g;
    if (!cfg_.no_fusion_rnn) {
        g = fusion_rnn_.run(t, pb, q2s);
    } else {
        Var zero = t.leaf(Tensor({cfg_.d}));
        g.assign(utts.size(), zero);
    }

    // Long-term branch: self-attention over utterance positions.
    Var q2_mat = od::stack_rows(q2s);  // (U, d)
    std::vector<std::uint8_t> all(utts.size(), 1);
    Var ghat_mat = fusion_attn_.apply(t, pb, q2_mat, all, drop, cfg_.ln_eps,
                                      cfg_.scale_attention,
                                      probes && probes->fusion_attention
                                          ? probes->fusion_attention
                                          : nullptr);

    // SUBMULTI merge of the two branches.
    std::vector<Var> g_bar;
    g_bar.reserve(utts.size());
    std::vector<Var> g_hat_rows;
    for (int i = 0; i < u_count; ++i) {
        Var ghat = od::row(ghat_mat, i);
        g_hat_rows.push_back(ghat);
        Var diff = od::sub(ghat, g[static_cast<size_t>(i)]);
        Var merged = od::concat({od::mul(diff, diff), od::mul(ghat, g[static_cast<size_t>(i)])});
        g_bar.push_back(od::relu(od::linear(merged, pb("submulti.w"), pb("submulti.b"))));
    }

    std::vector<Var> g_tilde = pred_rnn_.run(t, pb, g_bar);
    Var last = g_tilde.back();
    Var score = od::sigmoid(od::linear(last, pb("score.w"), pb("score.b")));

    if (probes && probes->trace) {
        FusionTrace& tr = *probes->trace;
        tr.g.clear();
        tr.g_hat.clear();
        tr.g_bar.clear();
        for (int i = 0; i < u_count; ++i) {
            tr.g.push_back(g[static_cast<size_t>(i)].value());
            tr.g_hat.push_back(g_hat_rows[static_cast<size_t>(i)].value());
            tr.g_bar.push_back(g_bar[static_cast<size_t>(i)].value());
        }
        tr.g_tilde_last = last.value();
        tr.score = score.value()[0];
    }
    return score;
}

}  // namespace srs
