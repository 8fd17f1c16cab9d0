#include "srs/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "srs/errors.hpp"

namespace srs {

using nlohmann::json;

namespace {

constexpr int kWindow = 8;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

struct Flat {
    const double* px;
    int h, w;
};

Flat flatten_image(const Tensor& img, const char* side) {
    if (img.rank() == 3 && img.dim(0) == 1) return {img.data(), img.dim(1), img.dim(2)};
    if (img.rank() == 2) return {img.data(), img.dim(0), img.dim(1)};
    throw DimensionError(std::string("ssim: ") + side + " image must be (h, w) or (1, h, w), got " +
                         img.shape_str());
}

/// Inclusive-prefix summed-area table: sat[(i+1)*(w+1) + (j+1)] = sum of the
/// rectangle [0..i] x [0..j].
std::vector<double> build_sat(const double* px, int h, int w,
                              const double* qx = nullptr) {
    std::vector<double> sat(static_cast<size_t>((h + 1) * (w + 1)), 0.0);
    for (int i = 0; i < h; ++i) {
        double row = 0.0;
        for (int j = 0; j < w; ++j) {
            double v = qx ? px[i * w + j] * qx[i * w + j] : px[i * w + j];
            row += v;
            sat[static_cast<size_t>((i + 1) * (w + 1) + (j + 1))] =
                sat[static_cast<size_t>(i * (w + 1) + (j + 1))] + row;
        }
    }
    return sat;
}

double window_sum(const std::vector<double>& sat, int w, int i, int j, int win) {
    int stride = w + 1;
    return sat[static_cast<size_t>((i + win) * stride + (j + win))] -
           sat[static_cast<size_t>(i * stride + (j + win))] -
           sat[static_cast<size_t>((i + win) * stride + j)] +
           sat[static_cast<size_t>(i * stride + j)];
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b) {
    Flat fa = flatten_image(a, "first");
    Flat fb = flatten_image(b, "second");
    if (fa.h != fb.h || fa.w != fb.w) {
        std::ostringstream os;
        os << "ssim: geometry mismatch, " << fa.h << "x" << fa.w << " vs " << fb.h << "x"
           << fb.w;
        throw DimensionError(os.str());
    }
    if (fa.h < kWindow || fa.w < kWindow) {
        std::ostringstream os;
        os << "ssim: image " << fa.h << "x" << fa.w << " is smaller than the " << kWindow
           << "x" << kWindow << " window";
        throw DimensionError(os.str());
    }

    auto sat_a = build_sat(fa.px, fa.h, fa.w);
    auto sat_b = build_sat(fb.px, fb.h, fb.w);
    auto sat_aa = build_sat(fa.px, fa.h, fa.w, fa.px);
    auto sat_bb = build_sat(fb.px, fb.h, fb.w, fb.px);
    auto sat_ab = build_sat(fa.px, fa.h, fa.w, fb.px);

    const double inv_n = 1.0 / (kWindow * kWindow);
    double total = 0.0;
    long long windows = 0;
    for (int i = 0; i + kWindow <= fa.h; ++i) {
        for (int j = 0; j + kWindow <= fa.w; ++j) {
            double mu_a = window_sum(sat_a, fa.w, i, j, kWindow) * inv_n;
            double mu_b = window_sum(sat_b, fa.w, i, j, kWindow) * inv_n;
            double var_a = window_sum(sat_aa, fa.w, i, j, kWindow) * inv_n - mu_a * mu_a;
            double var_b = window_sum(sat_bb, fa.w, i, j, kWindow) * inv_n - mu_b * mu_b;
            double cov = window_sum(sat_ab, fa.w, i, j, kWindow) * inv_n - mu_a * mu_b;
            double num = (2.0 * mu_a * mu_b + kC1) * (2.0 * cov + kC2);
            double den = (mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2);
            total += num / den;
            ++windows;
        }
    }
    return total / static_cast<double>(windows);
}

namespace {

/// Evaluation-mode sticker representations, one entry per library index.
struct StickerValues {
    Tensor grid, flat;
};

std::vector<StickerValues> encode_all_stickers(Model& model, const Corpus& corpus) {
    std::vector<StickerValues> reprs(static_cast<size_t>(corpus.stickers.size()));
    std::vector<char> needed(reprs.size(), 0);
    for (const DialogContext& ctx : corpus.contexts)
        for (int s : ctx.candidates) needed[static_cast<size_t>(s)] = 1;
    for (int s = 0; s < corpus.stickers.size(); ++s) {
        if (!needed[static_cast<size_t>(s)]) continue;
        Tape t;
        ParamBinding pb(t, model.params());
        StickerRepr rep = model.encode_sticker(t, pb, corpus.stickers.at(s).image);
        reprs[static_cast<size_t>(s)] = {rep.grid.value(), rep.flat.value()};
    }
    return reprs;
}

}  // namespace

std::vector<RankingResult> score_corpus(Model& model, const Corpus& corpus, int last_n) {
    if (last_n < 0) throw UsageError("score_corpus: last_n must be >= 0");
    std::vector<StickerValues> reprs = encode_all_stickers(model, corpus);

    std::vector<RankingResult> results;
    results.reserve(corpus.contexts.size());
    const DropoutCtx eval_mode{};
    for (const DialogContext& ctx : corpus.contexts) {
        Tape t;
        ParamBinding pb(t, model.params());

        size_t keep = ctx.utterances.size();
        if (last_n > 0) keep = std::min<size_t>(keep, static_cast<size_t>(last_n));
        std::vector<UtteranceRepr> ureps;
        ureps.reserve(keep);
        for (size_t i = ctx.utterances.size() - keep; i < ctx.utterances.size(); ++i)
            ureps.push_back(model.encode_utterance(t, pb, ctx.utterances[i], eval_mode));

        RankingResult rr;
        rr.context_id = std::to_string(ctx.id);
        rr.positive_index = ctx.positive_index;
        rr.scores.reserve(ctx.candidates.size());
        for (int s : ctx.candidates) {
            StickerRepr rep;
            rep.grid = t.leaf(reprs[static_cast<size_t>(s)].grid);
            rep.flat = t.leaf(reprs[static_cast<size_t>(s)].flat);
            rr.scores.push_back(
                model.score_candidate(t, pb, rep, ureps, eval_mode).value().item());
        }
        results.push_back(std::move(rr));
    }
    return results;
}

json EvalReport::to_json() const {
    json j;
    j["contexts"] = contexts;
    j["map"] = map;
    j["r_at_1"] = r_at_1;
    j["r_at_2"] = r_at_2;
    j["r_at_5"] = r_at_5;
    return j;
}

EvalReport evaluate(const std::vector<RankingResult>& results) {
    for (const RankingResult& r : results)
        if (r.scores.size() < 5)
            throw DimensionError("evaluate: every candidate set needs >= 5 entries");
    EvalReport rep;
    rep.contexts = static_cast<int>(results.size());
    rep.map = map_score(results);
    rep.r_at_1 = recall_at_k(results, 1);
    rep.r_at_2 = recall_at_k(results, 2);
    rep.r_at_5 = recall_at_k(results, 5);
    return rep;
}

json SimilarityReport::to_json() const {
    json j;
    j["mean_similarity"] = mean_similarity;
    j["buckets"] = json::array();
    for (const SimilarityBucket& b : buckets) {
        json bj;
        bj["lo"] = b.lo;
        bj["hi"] = b.hi;
        bj["count"] = b.count;
        bj["r_at_1"] = b.r_at_1;
        j["buckets"].push_back(bj);
    }
    return j;
}

SimilarityReport similarity_report(const Corpus& corpus,
                                   const std::vector<RankingResult>& results) {
    if (results.size() != corpus.contexts.size())
        throw DimensionError("similarity_report: results are not aligned with the corpus");

    // Stickers repeat across contexts, so SSIM values are cached per pair.
    std::map<std::pair<int, int>, double> pair_cache;
    auto pair_ssim = [&](int x, int y) {
        std::pair<int, int> key{std::min(x, y), std::max(x, y)};
        auto it = pair_cache.find(key);
        if (it != pair_cache.end()) return it->second;
        double v = ssim(corpus.stickers.at(key.first).image,
                        corpus.stickers.at(key.second).image);
        pair_cache.emplace(key, v);
        return v;
    };

    SimilarityReport rep;
    rep.context_similarity.reserve(corpus.contexts.size());
    for (const DialogContext& ctx : corpus.contexts) {
        int pos = ctx.candidates[static_cast<size_t>(ctx.positive_index)];
        double total = 0.0;
        int negs = 0;
        for (int i = 0; i < static_cast<int>(ctx.candidates.size()); ++i) {
            if (i == ctx.positive_index) continue;
            total += pair_ssim(pos, ctx.candidates[static_cast<size_t>(i)]);
            ++negs;
        }
        rep.context_similarity.push_back(negs > 0 ? total / negs : 0.0);
    }

    double mean = 0.0;
    double lo = rep.context_similarity.empty() ? 0.0 : rep.context_similarity[0];
    double hi = lo;
    for (double s : rep.context_similarity) {
        mean += s;
        lo = std::min(lo, s);
        hi = std::max(hi, s);
    }
    rep.mean_similarity =
        rep.context_similarity.empty() ? 0.0 : mean / static_cast<double>(rep.context_similarity.size());

    const int kBuckets = 5;
    double width = (hi - lo) / kBuckets;
    rep.buckets.assign(kBuckets, SimilarityBucket{});
    std::vector<std::vector<RankingResult>> members(kBuckets);
    for (int b = 0; b < kBuckets; ++b) {
        rep.buckets[static_cast<size_t>(b)].lo = lo + width * b;
        rep.buckets[static_cast<size_t>(b)].hi = b + 1 == kBuckets ? hi : lo + width * (b + 1);
    }
    for (size_t i = 0; i < rep.context_similarity.size(); ++i) {
        int b = width > 0.0
                    ? std::min(kBuckets - 1,
                               static_cast<int>((rep.context_similarity[i] - lo) / width))
                    : 0;
        rep.buckets[static_cast<size_t>(b)].count += 1;
        members[static_cast<size_t>(b)].push_back(results[i]);
    }
    for (int b = 0; b < kBuckets; ++b)
        rep.buckets[static_cast<size_t>(b)].r_at_1 =
            members[static_cast<size_t>(b)].empty()
                ? 0.0
                : recall_at_k(members[static_cast<size_t>(b)], 1);
    return rep;
}

std::vector<SweepRow> sweep_utterances(Model& model, const Corpus& corpus,
                                       const std::vector<int>& n_list) {
    std::vector<SweepRow> rows;
    rows.reserve(n_list.size());
    for (int n : n_list) {
        if (n < 1) throw UsageError("sweep_utterances: n must be >= 1");
        SweepRow row;
        row.last_n = n;
        row.report = evaluate(score_corpus(model, corpus, n));
        rows.push_back(std::move(row));
    }
    return rows;
}

json AttentionDump::to_json() const {
    json j;
    j["context_id"] = context_id;
    j["sticker_id"] = sticker_id;
    j["salient_row"] = salient_row;
    j["salient_token"] = salient_token;
    j["rows"] = json::array();
    for (size_t i = 0; i < rows.size(); ++i) {
        json rj;
        rj["tokens"] = rows[i].tokens;
        rj["token_weights"] = rows[i].token_weights;
        rj["cell_weights"] = rows[i].cell_weights;
        rj["holds_salient_token"] = static_cast<int>(i) == salient_row;
        j["rows"].push_back(rj);
    }
    return j;
}

AttentionDump attention_dump(Model& model, const Corpus& corpus, int context_index,
                             int candidate_index) {
    if (model.config().no_din)
        throw UsageError("attention dump requires the deep interaction network");
    if (context_index < 0 || context_index >= static_cast<int>(corpus.contexts.size())) {
        std::ostringstream os;
        os << "attention dump: no context with index " << context_index << " (corpus has "
           << corpus.contexts.size() << ")";
        throw UsageError(os.str());
    }
    const DialogContext& ctx = corpus.contexts[static_cast<size_t>(context_index)];
    int cand = candidate_index < 0 ? ctx.positive_index : candidate_index;
    if (cand >= static_cast<int>(ctx.candidates.size())) {
        std::ostringstream os;
        os << "attention dump: candidate " << cand << " out of range (context has "
           << ctx.candidates.size() << ")";
        throw UsageError(os.str());
    }
    int sticker = ctx.candidates[static_cast<size_t>(cand)];

    Tape t;
    ParamBinding pb(t, model.params());
    const DropoutCtx eval_mode{};
    StickerRepr rep = model.encode_sticker(t, pb, corpus.stickers.at(sticker).image);
    std::vector<UtteranceRepr> ureps;
    for (const Utterance& u : ctx.utterances)
        ureps.push_back(model.encode_utterance(t, pb, u, eval_mode));
    std::vector<InteractionState> states;
    ScoreProbes probes;
    probes.interactions = &states;
    model.score_candidate(t, pb, rep, ureps, eval_mode, &probes);

    AttentionDump dump;
    dump.context_id = ctx.id;
    dump.sticker_id = corpus.stickers.at(sticker).id;
    double best = -1.0;
    for (size_t u = 0; u < states.size(); ++u) {
        AttentionRow row;
        const Tensor& tau_u = states[u].tau_u.value();
        const Tensor& tau_s = states[u].tau_s.value();
        for (int j = 0; j < tau_u.size(); ++j) {
            row.tokens.push_back(corpus.vocab.word(ctx.utterances[u].ids[static_cast<size_t>(j)]));
            row.token_weights.push_back(tau_u[j]);
            if (tau_u[j] > best) {
                best = tau_u[j];
                dump.salient_row = static_cast<int>(u);
                dump.salient_token = j;
            }
        }
        for (int k = 0; k < tau_s.size(); ++k) row.cell_weights.push_back(tau_s[k]);
        dump.rows.push_back(std::move(row));
    }
    return dump;
}

}  // namespace srs
