#pragma once

#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "srs/corpus.hpp"
#include "srs/model.hpp"
#include "srs/params.hpp"

namespace srs {

/// Optimization settings for the ranking objective. The corpus shape fields
/// (t_x, negatives, max_utterances) describe what the trainer expects of its
/// input and are validated against the corpus before the first step.
struct TrainConfig {
    int batch_size = 32;
    double lr = 1e-4;
    double margin = 0.3;       // hinge rescaling margin
    double lambda_cls = 1.0;   // weight of the auxiliary emoji loss
    int epochs = 10;
    unsigned long long seed = 7;
    int t_x = 30;
    int negatives = 9;         // candidates per context = negatives + 1
    int max_utterances = 20;

    /// Throws UsageError when a field violates its invariant.
    void validate() const;

    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

/// One line of the training log. Every field except wall_seconds is a pure
/// function of (corpus, seed, config), so reruns reproduce them bit for bit;
/// wall_seconds is reporting-only and must stay out of determinism checks.
struct EpochStats {
    int epoch = 0;               // absolute epoch index, 0-based
    double hinge_loss = 0.0;     // mean ranking loss per context
    double cls_loss = 0.0;       // mean emoji loss per distinct batch sticker
    double train_recall_at1 = 0.0;  // from the training-pass scores
    double wall_seconds = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> epochs;
};

/// Ranking objective on the tape: sum over negatives of
/// max(0, neg - pos + margin).
Var hinge_loss(Tape& t, Var pos_score, const std::vector<Var>& neg_scores,
               double margin);

/// Plain-number twin of hinge_loss for logging and tests.
double hinge_loss_value(double pos, const std::vector<double>& negs, double margin);

/// Joint objective: L = L_r + lambda_cls * L_s.
double total_loss(double l_r, double l_s, double lambda_cls);

/// Mini-batch trainer. One Adam step per batch; gradients flow through every
/// candidate of every context in the batch plus the auxiliary emoji loss over
/// the batch's distinct stickers. train() may be called repeatedly: epoch
/// seeds derive from the absolute epoch index, so five 10-epoch calls walk
/// the same trajectory as one 50-epoch call.
class Trainer {
public:
    /// Validates config against model and corpus; throws UsageError on any
    /// mismatch (tokenization width, candidate-set size, emoji label range).
    Trainer(Model& model, const Corpus& corpus, TrainConfig cfg);

    /// Runs cfg.epochs more epochs. Aborts with TrainingFault naming the
    /// batch when a loss turns non-finite. `on_epoch` observes each record.
    TrainResult train(const std::function<void(const EpochStats&)>& on_epoch = {});

    int epochs_done() const { return epochs_done_; }
    const TrainConfig& config() const { return cfg_; }

private:
    struct BatchOutcome {
        double hinge_sum = 0.0;  // sum of per-context ranking losses
        double cls_sum = 0.0;    // sum of per-sticker emoji losses
        int sticker_count = 0;   // distinct stickers in the batch
        int rank1_hits = 0;
    };

    /// One optimizer step over `ctx_ids` (indices into corpus contexts).
    BatchOutcome step(const std::vector<int>& ctx_ids, Rng& drop_rng);

    Model& model_;
    const Corpus& corpus_;
    TrainConfig cfg_;
    bool classify_ = false;  // auxiliary head active for this run
    int epochs_done_ = 0;
};

}  // namespace srs
