#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "srs/corpus.hpp"
#include "srs/metrics.hpp"
#include "srs/model.hpp"

namespace srs {

/// Structural similarity between two same-geometry grayscale images in
/// [0, 1], computed over all 8x8 windows at stride 1 with the standard
/// constants C1 = (0.01)^2 and C2 = (0.03)^2 for unit dynamic range.
/// Accepts (h, w) or (1, h, w); throws DimensionError on geometry mismatch
/// or images smaller than the window.
double ssim(const Tensor& a, const Tensor& b);

/// Scores every candidate of every context in evaluation mode (dropout off).
/// Each distinct sticker is encoded once. `last_n` > 0 truncates every
/// context to its most recent last_n utterances first.
std::vector<RankingResult> score_corpus(Model& model, const Corpus& corpus,
                                        int last_n = 0);

/// Aggregate ranking metrics over a result set.
struct EvalReport {
    int contexts = 0;
    double map = 0.0;
    double r_at_1 = 0.0;
    double r_at_2 = 0.0;
    double r_at_5 = 0.0;

    nlohmann::json to_json() const;
};

/// Requires every result to have at least 5 candidates.
EvalReport evaluate(const std::vector<RankingResult>& results);

/// One of the five equal-width similarity groups.
struct SimilarityBucket {
    double lo = 0.0, hi = 0.0;   // similarity range covered
    int count = 0;               // contexts falling in the range
    double r_at_1 = 0.0;         // recall@1 within the bucket (0 when empty)
};

struct SimilarityReport {
    std::vector<double> context_similarity;  // aligned with the result list
    double mean_similarity = 0.0;
    std::vector<SimilarityBucket> buckets;   // five, spanning observed min..max

    nlohmann::json to_json() const;
};

/// Per-context mean SSIM between the positive sticker and each of its
/// negatives, grouped into five equal-width buckets with per-bucket R@1.
/// `results` must be aligned with corpus.contexts (as from score_corpus).
SimilarityReport similarity_report(const Corpus& corpus,
                                   const std::vector<RankingResult>& results);

struct SweepRow {
    int last_n = 0;
    EvalReport report;
};

/// Re-evaluates the corpus keeping only the most recent n utterances for
/// each n in n_list.
std::vector<SweepRow> sweep_utterances(Model& model, const Corpus& corpus,
                                       const std::vector<int>& n_list);

/// Interaction attention for one (context, candidate) pair, one row per
/// utterance: token weights tau_u over the t_x slots and grid-cell weights
/// tau_s over the p^2 cells. The globally strongest token is flagged.
struct AttentionRow {
    std::vector<std::string> tokens;     // vocabulary words, pads included
    std::vector<double> token_weights;   // tau_u
    std::vector<double> cell_weights;    // tau_s
};

struct AttentionDump {
    int context_id = 0;
    std::string sticker_id;
    int salient_row = -1;    // utterance holding the strongest token weight
    int salient_token = -1;  // slot of that token within the row
    std::vector<AttentionRow> rows;

    nlohmann::json to_json() const;
};

/// Runs an evaluation-mode forward pass for one context and collects the
/// interaction attention. candidate_index -1 selects the positive sticker.
/// Requires the deep interaction network (throws UsageError under no_din).
AttentionDump attention_dump(Model& model, const Corpus& corpus, int context_index,
                             int candidate_index = -1);

}  // namespace srs
