#pragma once

#include <string>
#include <vector>

namespace srs {

/// Scores for one candidate set: one positive among the candidates, the rest
/// negatives.  `rank()` is the 1-based rank of the positive with pessimistic
/// tie handling (equal-scoring negatives are counted as ranked above it), so
/// rank = 1 + |{negatives with score >= positive score}|.
struct RankingResult {
    std::string context_id;
    std::vector<double> scores;
    int positive_index = 0;

    int rank() const;
};

/// 1 if the positive is ranked within the top k, else 0.
int recall_at_k(const RankingResult& result, int k);

/// Mean of recall_at_k over a result set.  Empty input -> 0.
double recall_at_k(const std::vector<RankingResult>& results, int k);

/// Mean average precision with a single relevant item per candidate set,
/// which reduces to mean(1 / rank).  Empty input -> 0.
double map_score(const std::vector<RankingResult>& results);

}  // namespace srs
