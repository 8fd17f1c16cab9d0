#include "srs/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <numeric>
#include <sstream>

#include "srs/errors.hpp"
#include "srs/metrics.hpp"
#include "srs/rng.hpp"

namespace srs {

using nlohmann::json;

void TrainConfig::validate() const {
    if (batch_size < 1) throw UsageError("train config: batch_size must be >= 1");
    if (!(lr > 0.0)) throw UsageError("train config: lr must be positive");
    if (!(margin > 0.0)) throw UsageError("train config: margin must be positive");
    if (lambda_cls < 0.0) throw UsageError("train config: lambda_cls must be >= 0");
    if (epochs < 0) throw UsageError("train config: epochs must be >= 0");
    if (t_x < 1) throw UsageError("train config: t_x must be >= 1");
    if (negatives < 1) throw UsageError("train config: negatives must be >= 1");
    if (max_utterances < 1) throw UsageError("train config: max_utterances must be >= 1");
}

json TrainConfig::to_json() const {
    json j;
    j["batch_size"] = batch_size;
    j["lr"] = lr;
    j["margin"] = margin;
    j["lambda_cls"] = lambda_cls;
    j["epochs"] = epochs;
    j["seed"] = seed;
    j["t_x"] = t_x;
    j["negatives"] = negatives;
    j["max_utterances"] = max_utterances;
    return j;
}

TrainConfig TrainConfig::from_json(const json& j) {
    TrainConfig c;
    try {
        c.batch_size = j.at("batch_size").get<int>();
        c.lr = j.at("lr").get<double>();
        c.margin = j.at("margin").get<double>();
        c.lambda_cls = j.at("lambda_cls").get<double>();
        c.epochs = j.at("epochs").get<int>();
        c.seed = j.at("seed").get<unsigned long long>();
        c.t_x = j.at("t_x").get<int>();
        c.negatives = j.at("negatives").get<int>();
        c.max_utterances = j.at("max_utterances").get<int>();
    } catch (const json::exception& e) {
        throw UsageError(std::string("train config json: ") + e.what());
    }
    c.validate();
    return c;
}

Var hinge_loss(Tape& t, Var pos_score, const std::vector<Var>& neg_scores,
               double margin) {
    if (neg_scores.empty()) throw DimensionError("hinge_loss: no negative scores");
    std::vector<Var> terms;
    terms.reserve(neg_scores.size());
    for (const Var& neg : neg_scores)
        terms.push_back(ops::relu(ops::add_scalar(ops::sub(neg, pos_score), margin)));
    return ops::sum(ops::concat(terms));
}

double hinge_loss_value(double pos, const std::vector<double>& negs, double margin) {
    double total = 0.0;
    for (double n : negs) total += std::max(0.0, n - pos + margin);
    return total;
}

double total_loss(double l_r, double l_s, double lambda_cls) {
    return l_r + lambda_cls * l_s;
}

Trainer::Trainer(Model& model, const Corpus& corpus, TrainConfig cfg)
    : model_(model), corpus_(corpus), cfg_(cfg) {
    cfg_.validate();
    const ModelConfig& mc = model_.config();
    if (corpus_.contexts.empty()) throw UsageError("trainer: corpus has no contexts");
    if (corpus_.vocab.size() > mc.vocab_size) {
        std::ostringstream os;
        os << "trainer: corpus vocabulary (" << corpus_.vocab.size()
           << " words) exceeds model vocab_size " << mc.vocab_size;
        throw UsageError(os.str());
    }
    if (cfg_.t_x != mc.t_x || cfg_.max_utterances > mc.max_utterances) {
        std::ostringstream os;
        os << "trainer: config shape (t_x " << cfg_.t_x << ", max_utterances "
           << cfg_.max_utterances << ") incompatible with model (t_x " << mc.t_x
           << ", max_utterances " << mc.max_utterances << ")";
        throw UsageError(os.str());
    }
    classify_ = !mc.no_classify && cfg_.lambda_cls > 0.0;
    if (classify_) {
        for (const Sticker& s : corpus_.stickers.all()) {
            if (s.emoji_tag < 0 || s.emoji_tag >= mc.k_emoji) {
                std::ostringstream os;
                os << "trainer: sticker '" << s.id << "' has emoji tag " << s.emoji_tag
                   << " outside the model's " << mc.k_emoji << " classes";
                throw UsageError(os.str());
            }
        }
    }
    for (const DialogContext& ctx : corpus_.contexts) {
        if (static_cast<int>(ctx.candidates.size()) != cfg_.negatives + 1) {
            std::ostringstream os;
            os << "trainer: context " << ctx.id << " has " << ctx.candidates.size()
               << " candidates; expected " << (cfg_.negatives + 1);
            throw UsageError(os.str());
        }
        if (static_cast<int>(ctx.utterances.size()) > cfg_.max_utterances) {
            std::ostringstream os;
            os << "trainer: context " << ctx.id << " has " << ctx.utterances.size()
               << " utterances; max is " << cfg_.max_utterances;
            throw UsageError(os.str());
        }
        for (const Utterance& u : ctx.utterances) {
            if (u.length() != cfg_.t_x) {
                std::ostringstream os;
                os << "trainer: context " << ctx.id << " tokenized at width "
                   << u.length() << "; config expects t_x " << cfg_.t_x;
                throw UsageError(os.str());
            }
        }
    }
}

Trainer::BatchOutcome Trainer::step(const std::vector<int>& ctx_ids, Rng& drop_rng) {
    BatchOutcome out;
    const double inv_batch = 1.0 / static_cast<double>(ctx_ids.size());

    // Phase one: each distinct sticker of the batch gets its own tape holding
    // the conv encoder pass (and the emoji loss); the candidate graphs below
    // consume the grid/flat values as leaves, and phase three replays the
    // accumulated leaf gradients through these tapes.
    std::vector<int> distinct;
    for (int c : ctx_ids)
        for (int s : corpus_.contexts[static_cast<size_t>(c)].candidates)
            distinct.push_back(s);
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    out.sticker_count = static_cast<int>(distinct.size());

    struct StickerTape {
        Tape tape;
        ParamBinding pb;
        Var grid, flat, cls;
        Tensor grid_seed, flat_seed;
        explicit StickerTape(ParamStore& ps) : pb(tape, ps) {}
    };
    std::deque<StickerTape> enc;
    std::vector<int> slot(static_cast<size_t>(corpus_.stickers.size()), -1);
    for (int s : distinct) {
        slot[static_cast<size_t>(s)] = static_cast<int>(enc.size());
        StickerTape& st = enc.emplace_back(model_.params());
        StickerRepr rep = model_.encode_sticker(st.tape, st.pb,
                                                corpus_.stickers.at(s).image);
        st.grid = rep.grid;
        st.flat = rep.flat;
        st.grid_seed = Tensor::zeros(rep.grid.value().shape());
        st.flat_seed = Tensor::zeros(rep.flat.value().shape());
        if (classify_) {
            Var logits = model_.classify_logits(st.tape, st.pb, rep.flat);
            st.cls = ops::nll_loss(logits, corpus_.stickers.at(s).emoji_tag);
            out.cls_sum += st.cls.value().item();
        }
    }

    // Phase two: one tape per context. Utterance encodings are shared by all
    // of the context's candidates; backward seeds 1/batch so the accumulated
    // gradient is of the batch-mean ranking loss.
    GradMap grads;
    DropoutCtx drop{model_.config().dropout, &drop_rng};
    for (int c : ctx_ids) {
        const DialogContext& ctx = corpus_.contexts[static_cast<size_t>(c)];
        Tape t;
        ParamBinding pb(t, model_.params());
        std::vector<UtteranceRepr> ureps;
        ureps.reserve(ctx.utterances.size());
        for (const Utterance& u : ctx.utterances)
            ureps.push_back(model_.encode_utterance(t, pb, u, drop));

        std::vector<Var> cand_leaves_grid, cand_leaves_flat;
        std::vector<Var> scores;
        std::vector<double> score_vals;
        scores.reserve(ctx.candidates.size());
        for (int s : ctx.candidates) {
            const StickerTape& st = enc[static_cast<size_t>(slot[static_cast<size_t>(s)])];
            StickerRepr rep;
            rep.grid = t.leaf(st.grid.value(), true);
            rep.flat = t.leaf(st.flat.value(), true);
            cand_leaves_grid.push_back(rep.grid);
            cand_leaves_flat.push_back(rep.flat);
            Var sc = model_.score_candidate(t, pb, rep, ureps, drop);
            scores.push_back(sc);
            score_vals.push_back(sc.value().item());
            if (!std::isfinite(score_vals.back())) {
                std::ostringstream os;
                os << "non-finite candidate score in context " << ctx.id;
                throw TrainingFault(os.str());
            }
        }

        Var pos = scores[static_cast<size_t>(ctx.positive_index)];
        std::vector<Var> negs;
        for (int i = 0; i < static_cast<int>(scores.size()); ++i)
            if (i != ctx.positive_index) negs.push_back(scores[static_cast<size_t>(i)]);
        Var l_r = hinge_loss(t, pos, negs, cfg_.margin);
        out.hinge_sum += l_r.value().item();

        RankingResult rr{std::to_string(ctx.id), score_vals, ctx.positive_index};
        if (rr.rank() == 1) ++out.rank1_hits;

        t.backward(l_r, Tensor::scalar(inv_batch));
        pb.add_grads_to(grads);
        for (int i = 0; i < static_cast<int>(ctx.candidates.size()); ++i) {
            int sl = slot[static_cast<size_t>(ctx.candidates[static_cast<size_t>(i)])];
            StickerTape& st = enc[static_cast<size_t>(sl)];
            Tensor g = t.grad_or_zeros(cand_leaves_grid[static_cast<size_t>(i)]);
            for (int k = 0; k < g.size(); ++k) st.grid_seed[k] += g[k];
            Tensor f = t.grad_or_zeros(cand_leaves_flat[static_cast<size_t>(i)]);
            for (int k = 0; k < f.size(); ++k) st.flat_seed[k] += f[k];
        }
    }

    // Phase three: pull the ranking gradients through each conv pass and add
    // the emoji loss seeded lambda / (distinct stickers).
    const double cls_seed = classify_ ? cfg_.lambda_cls / static_cast<double>(distinct.size())
                                      : 0.0;
    for (StickerTape& st : enc) {
        std::vector<std::pair<Var, Tensor>> seeds;
        seeds.emplace_back(st.grid, st.grid_seed);
        seeds.emplace_back(st.flat, st.flat_seed);
        if (classify_) seeds.emplace_back(st.cls, Tensor::scalar(cls_seed));
        st.tape.backward_multi(seeds);
        st.pb.add_grads_to(grads);
    }

    AdamConfig adam;
    adam.lr = cfg_.lr;
    adam_step(model_.params(), grads, adam);
    return out;
}

TrainResult Trainer::train(const std::function<void(const EpochStats&)>& on_epoch) {
    TrainResult result;
    const int n = static_cast<int>(corpus_.contexts.size());
    for (int local = 0; local < cfg_.epochs; ++local) {
        const int epoch = epochs_done_;
        auto start = std::chrono::steady_clock::now();

        // Epoch streams hang off the absolute epoch index so that resumed
        // runs replay the exact schedule of an uninterrupted one.
        Rng shuffle_rng(mix_seed(cfg_.seed, 2ULL * static_cast<unsigned long long>(epoch) + 1));
        Rng drop_rng(mix_seed(cfg_.seed, 2ULL * static_cast<unsigned long long>(epoch) + 2));
        std::vector<int> order(static_cast<size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        shuffle_rng.shuffle(order);

        double hinge_sum = 0.0, cls_sum = 0.0;
        long long sticker_total = 0;
        int hits = 0;
        int batch_index = 0;
        for (int at = 0; at < n; at += cfg_.batch_size, ++batch_index) {
            int end = std::min(at + cfg_.batch_size, n);
            std::vector<int> ids(order.begin() + at, order.begin() + end);
            BatchOutcome b;
            try {
                b = step(ids, drop_rng);
            } catch (const TrainingFault& e) {
                std::ostringstream os;
                os << "epoch " << epoch << ", batch " << batch_index << " (contexts";
                for (int id : ids) os << ' ' << corpus_.contexts[static_cast<size_t>(id)].id;
                os << "): " << e.what();
                throw TrainingFault(os.str());
            }
            if (!std::isfinite(b.hinge_sum) || !std::isfinite(b.cls_sum)) {
                std::ostringstream os;
                os << "non-finite loss in epoch " << epoch << ", batch " << batch_index
                   << " (contexts";
                for (int id : ids) os << ' ' << corpus_.contexts[static_cast<size_t>(id)].id;
                os << ")";
                throw TrainingFault(os.str());
            }
            hinge_sum += b.hinge_sum;
            cls_sum += b.cls_sum;
            sticker_total += b.sticker_count;
            hits += b.rank1_hits;
        }

        EpochStats st;
        st.epoch = epoch;
        st.hinge_loss = hinge_sum / static_cast<double>(n);
        st.cls_loss = classify_ && sticker_total > 0
                          ? cls_sum / static_cast<double>(sticker_total)
                          : 0.0;
        st.train_recall_at1 = static_cast<double>(hits) / static_cast<double>(n);
        st.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.epochs.push_back(st);
        ++epochs_done_;
        if (on_epoch) on_epoch(st);
    }
    return result;
}

}  // namespace srs
