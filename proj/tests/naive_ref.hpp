#pragma once

// Independent straight-from-the-formula reimplementations of the interaction
// and fusion arithmetic, written with plain loops over std::vector so they
// share nothing with the tape-based implementation. Used as oracles.

#include <algorithm>
#include <cstdint>
#include <tuple>
#include <vector>

#include "srs/tensor.hpp"

namespace naive {

struct Interaction {
    std::vector<std::vector<double>> M;  // cells x t_x, masked columns zero
    std::vector<double> tau_u;           // t_x
    std::vector<double> tau_s;           // cells
    std::vector<double> l;               // d
    std::vector<double> r;               // d
    std::vector<double> q1;              // d
    std::vector<double> q2;              // d
};

// sigma(x, y) = w . [x (+) y (+) x*y] evaluated pairwise, then max pooling,
// weighted sums, integrate and combine. grid: (cells, d); h: (t_x, d);
// w: (3d); if_w: (d, 4d); q2_w: (d, 2d). Requires at least one unmasked word.
inline Interaction interact(const srs::Tensor& grid, const srs::Tensor& flat,
                            const srs::Tensor& h, const std::vector<std::uint8_t>& mask,
                            const srs::Tensor& w, const srs::Tensor& if_w,
                            const srs::Tensor& if_b, const srs::Tensor& q2_w,
                            const srs::Tensor& q2_b) {
    const int cells = grid.dim(0);
    const int d = grid.dim(1);
    const int t_x = h.dim(0);

    Interaction out;
    out.M.assign(static_cast<size_t>(cells), std::vector<double>(static_cast<size_t>(t_x), 0.0));
    for (int k = 0; k < cells; ++k) {
        for (int j = 0; j < t_x; ++j) {
            if (!mask[static_cast<size_t>(j)]) continue;
            double s = 0.0;
            for (int i = 0; i < d; ++i) {
                double x = grid.at(k, i), y = h.at(j, i);
                s += w[i] * x + w[d + i] * y + w[2 * d + i] * x * y;
            }
            out.M[static_cast<size_t>(k)][static_cast<size_t>(j)] = s;
        }
    }

    out.tau_u.assign(static_cast<size_t>(t_x), 0.0);
    for (int j = 0; j < t_x; ++j) {
        if (!mask[static_cast<size_t>(j)]) continue;
        double best = out.M[0][static_cast<size_t>(j)];
        for (int k = 1; k < cells; ++k)
            best = std::max(best, out.M[static_cast<size_t>(k)][static_cast<size_t>(j)]);
        out.tau_u[static_cast<size_t>(j)] = best;
    }
    out.tau_s.assign(static_cast<size_t>(cells), 0.0);
    for (int k = 0; k < cells; ++k) {
        bool seen = false;
        double best = 0.0;
        for (int j = 0; j < t_x; ++j) {
            if (!mask[static_cast<size_t>(j)]) continue;
            double v = out.M[static_cast<size_t>(k)][static_cast<size_t>(j)];
            if (!seen || v > best) best = v;
            seen = true;
        }
        out.tau_s[static_cast<size_t>(k)] = best;
    }

    out.l.assign(static_cast<size_t>(d), 0.0);
    for (int j = 0; j < t_x; ++j) {
        if (!mask[static_cast<size_t>(j)]) continue;
        for (int i = 0; i < d; ++i)
            out.l[static_cast<size_t>(i)] += out.tau_u[static_cast<size_t>(j)] * h.at(j, i);
    }
    out.r.assign(static_cast<size_t>(d), 0.0);
    for (int k = 0; k < cells; ++k)
        for (int i = 0; i < d; ++i)
            out.r[static_cast<size_t>(i)] += out.tau_s[static_cast<size_t>(k)] * grid.at(k, i);

    std::vector<double> cat4(static_cast<size_t>(4 * d));
    for (int i = 0; i < d; ++i) {
        double x = flat[i], y = out.r[static_cast<size_t>(i)];
        cat4[static_cast<size_t>(i)] = x;
        cat4[static_cast<size_t>(d + i)] = y;
        cat4[static_cast<size_t>(2 * d + i)] = x * y;
        cat4[static_cast<size_t>(3 * d + i)] = x + y;
    }
    out.q1.assign(static_cast<size_t>(d), 0.0);
    for (int o = 0; o < d; ++o) {
        double s = if_b[o];
        for (int i = 0; i < 4 * d; ++i) s += if_w.at(o, i) * cat4[static_cast<size_t>(i)];
        out.q1[static_cast<size_t>(o)] = s;
    }
    out.q2.assign(static_cast<size_t>(d), 0.0);
    for (int o = 0; o < d; ++o) {
        double s = q2_b[o];
        for (int i = 0; i < d; ++i) s += q2_w.at(o, i) * out.q1[static_cast<size_t>(i)];
        for (int i = 0; i < d; ++i) s += q2_w.at(o, d + i) * out.l[static_cast<size_t>(i)];
        out.q2[static_cast<size_t>(o)] = s;
    }
    return out;
}

// g_bar = ReLU(W . [(ghat-g)*(ghat-g) (+) ghat*g] + b)
inline std::vector<double> submulti(const srs::Tensor& ghat, const srs::Tensor& g,
                                    const srs::Tensor& w, const srs::Tensor& b) {
    const int d = ghat.size();
    std::vector<double> out(static_cast<size_t>(d));
    for (int o = 0; o < d; ++o) {
        double s = b[o];
        for (int i = 0; i < d; ++i) {
            double diff = ghat[i] - g[i];
            s += w.at(o, i) * diff * diff;
            s += w.at(o, d + i) * ghat[i] * g[i];
        }
        out[static_cast<size_t>(o)] = s > 0.0 ? s : 0.0;
    }
    return out;
}

// L_r = sum over negatives of max(0, neg - pos + margin)
inline double hinge(double pos, const std::vector<double>& negs, double margin) {
    double total = 0.0;
    for (double n : negs) total += std::max(0.0, n - pos + margin);
    return total;
}

// Rank of the positive obtained by materializing the sorted candidate list.
// Candidates sort by descending score; at equal scores negatives are placed
// ahead of the positive (the pessimistic convention under test).
inline int rank_by_sorting(const std::vector<double>& scores, int positive_index) {
    std::vector<int> order(scores.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores[static_cast<size_t>(a)] != scores[static_cast<size_t>(b)])
            return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
        // tie: negative (any index != positive) first
        return (a != positive_index) && (b == positive_index);
    });
    for (size_t pos = 0; pos < order.size(); ++pos)
        if (order[pos] == positive_index) return static_cast<int>(pos) + 1;
    return -1;
}

// General average-precision definition evaluated over the materialized
// ranking: AP = (1/R) * sum_k Precision@k * rel_k, with R = 1 relevant item.
inline double average_precision(const std::vector<double>& scores, int positive_index) {
    int r = rank_by_sorting(scores, positive_index);
    double ap = 0.0;
    int relevant_seen = 0;
    for (int k = 1; k <= static_cast<int>(scores.size()); ++k) {
        int rel_k = (k == r) ? 1 : 0;
        relevant_seen += rel_k;
        if (rel_k) ap += static_cast<double>(relevant_seen) / static_cast<double>(k);
    }
    return ap;  // R = 1
}

// Recall@k from the materialized ranking.
inline int recall_by_sorting(const std::vector<double>& scores, int positive_index, int k) {
    return rank_by_sorting(scores, positive_index) <= k ? 1 : 0;
}

// Straightforward SSIM: every 8x8 window at stride 1, per-window statistics
// computed by explicit passes with deviation sums (no shared arithmetic with
// the summed-area-table implementation), then averaged.
inline double ssim_direct(const srs::Tensor& a, const srs::Tensor& b) {
    auto flat = [](const srs::Tensor& t) {
        if (t.rank() == 3) return std::make_tuple(t.data(), t.dim(1), t.dim(2));
        return std::make_tuple(t.data(), t.dim(0), t.dim(1));
    };
    auto [pa, h, w] = flat(a);
    auto [pb, h2, w2] = flat(b);
    (void)h2;
    (void)w2;
    const int win = 8;
    const double c1 = 0.0001, c2 = 0.0009;
    double total = 0.0;
    int count = 0;
    for (int i = 0; i + win <= h; ++i) {
        for (int j = 0; j + win <= w; ++j) {
            double ma = 0.0, mb = 0.0;
            for (int y = 0; y < win; ++y)
                for (int x = 0; x < win; ++x) {
                    ma += pa[(i + y) * w + (j + x)];
                    mb += pb[(i + y) * w + (j + x)];
                }
            ma /= win * win;
            mb /= win * win;
            double va = 0.0, vb = 0.0, cov = 0.0;
            for (int y = 0; y < win; ++y)
                for (int x = 0; x < win; ++x) {
                    double da = pa[(i + y) * w + (j + x)] - ma;
                    double db = pb[(i + y) * w + (j + x)] - mb;
                    va += da * da;
                    vb += db * db;
                    cov += da * db;
                }
            va /= win * win;
            vb /= win * win;
            cov /= win * win;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
                     ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++count;
        }
    }
    return total / count;
}

}  // namespace naive
