#include "srs/metrics.hpp"

#include "srs/errors.hpp"

namespace srs {

int RankingResult::rank() const {
    if (scores.empty()) throw DimensionError("RankingResult: empty score list");
    if (positive_index < 0 || positive_index >= static_cast<int>(scores.size()))
        throw DimensionError("RankingResult: positive_index out of range");
    double pos = scores[positive_index];
    int above = 0;
    for (int i = 0; i < static_cast<int>(scores.size()); ++i) {
        if (i == positive_index) continue;
        if (scores[i] >= pos) ++above;
    }
    return 1 + above;
}

int recall_at_k(const RankingResult& result, int k) {
    if (k < 1 || k > static_cast<int>(result.scores.size()))
        throw DimensionError("recall_at_k: k out of range");
    return result.rank() <= k ? 1 : 0;
}

double recall_at_k(const std::vector<RankingResult>& results, int k) {
    if (results.empty()) return 0.0;
    double hits = 0.0;
    for (const auto& r : results) hits += recall_at_k(r, k);
    return hits / static_cast<double>(results.size());
}

double map_score(const std::vector<RankingResult>& results) {
    if (results.empty()) return 0.0;
    double total = 0.0;
    for (const auto& r : results) total += 1.0 / static_cast<double>(r.rank());
    return total / static_cast<double>(results.size());
}

}  // namespace srs
