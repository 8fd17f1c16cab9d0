#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "srs/tensor.hpp"

namespace srs {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; default-constructed handles
/// are invalid.
class Var {
public:
    Var() = default;
    Var(Tape* tape, int id) : tape_(tape), id_(id) {}

    bool valid() const { return tape_ != nullptr; }
    Tape* tape() const { return tape_; }
    int id() const { return id_; }

    const Tensor& value() const;
    const std::vector<int>& shape() const { return value().shape(); }
    int size() const { return value().size(); }

private:
    Tape* tape_ = nullptr;
    int id_ = -1;
};

/// Reverse-mode autodiff tape. Nodes are appended in evaluation order and
/// visited in reverse during backward(), so no explicit topological sort is
/// needed. One tape per forward evaluation; a tape is single-threaded.
class Tape {
public:
    using BackFn = std::function<void(Tape&, const Tensor& upstream)>;

    Tape() { nodes_.reserve(256); }
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Register an input node. Parameters use requires_grad=true; constants
    /// (images, token embeddding inputs already materialized, masks) false.
    Var leaf(Tensor value, bool requires_grad = false);

    /// Internal: create an op node. requires_grad is inherited from parents;
    /// `back` is dropped when no parent needs gradients.
    Var make(Tensor value, std::initializer_list<Var> parents, BackFn back);
    Var make(Tensor value, const std::vector<Var>& parents, BackFn back);

    /// Backward from a scalar root (seeds with 1).
    void backward(const Var& root);
    /// Backward from a root with an explicit seed of the root's shape.
    void backward(const Var& root, const Tensor& seed);
    /// Backward from several seeded roots at once.
    void backward_multi(const std::vector<std::pair<Var, Tensor>>& seeds);

    const Tensor& val(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

    /// Gradient buffer for a node, allocated (zero) on first access.
    Tensor& grad_buf(int id);
    bool has_grad(int id) const;

    /// Gradient of `v` after backward(); zeros if no gradient flowed.
    Tensor grad_or_zeros(const Var& v) const;

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;        // empty until touched during backward
        bool requires_grad = false;
        BackFn back;
    };

    void sweep(int from_id);

    std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->val(id_); }

// ---------------------------------------------------------------------------
// Operations. All throw DimensionError on shape violations and require every
// input Var to live on the same tape.
// ---------------------------------------------------------------------------
namespace ops {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);                  // elementwise
Var scale(Var a, double c);
Var add_scalar(Var a, double c);

Var relu(Var a);
Var sigmoid(Var a);
Var tanh(Var a);

Var sum(Var a);                         // scalar
Var mean(Var a);                        // scalar

Var matmul(Var a, Var b);               // (m,k)x(k,n) -> (m,n)
Var matmul_nt(Var a, Var b);            // (m,k)x(n,k)^T -> (m,n)
Var transpose(Var a);                   // (m,n) -> (n,m)
Var reshape(Var a, std::vector<int> shape);

/// x (n) or X (t,n) against W (out,n), bias b (out).
Var linear(Var x, Var w, Var b);

Var concat(const std::vector<Var>& parts);          // rank-1 concat
Var concat_cols(Var a, Var b);                      // (t,m)+(t,n) -> (t,m+n)
Var stack_rows(const std::vector<Var>& rows);       // T x (d) -> (T,d)
Var row(Var x, int i);                              // (t,n) -> (n)

Var softmax(Var logits);                            // rank-1
/// Row softmax over unmasked keys; rows with query_mask 0 are all zero and
/// masked key columns get exactly zero probability.
Var masked_softmax_rows(Var scores, const std::vector<std::uint8_t>& key_mask,
                        const std::vector<std::uint8_t>& query_mask);

Var layer_norm(Var x, Var gain, Var bias, double eps);        // rank-1
Var layer_norm_rows(Var x, Var gain, Var bias, double eps);   // per row

/// Inverted dropout: y = x * keep_mask / keep_prob. Mask is precomputed by
/// the caller (so evaluation and gradient checks can disable it).
Var dropout(Var x, Tensor keep_mask, double keep_prob);

Var gather_rows(Var table, std::vector<int> ids);   // (v,d), ids(t) -> (t,d)
Var mean_rows_masked(Var x, const std::vector<std::uint8_t>& row_mask);
Var vecmat(Var w, Var x);                           // (m) x (m,d) -> (d)

/// 3x3 convolution, stride 2, zero padding 1: (ci,h,w) -> (co,h/2,w/2).
Var conv2d_s2(Var img, Var weight, Var bias);
/// Adaptive average pooling (c,h,w) -> (c,p,p).
Var adaptive_avg_pool(Var x, int p);

/// Relation scores between grid units and word vectors:
/// m[k][j] = w . [g_k (+) h_j (+) g_k*h_j] for unmasked word j, else 0.
Var relation_matrix(Var grid, Var words, Var w, const std::vector<std::uint8_t>& word_mask);
/// Column maxima of m over grid units; masked columns yield 0. Gradient is
/// routed to the first (lowest-index) maximizer.
Var col_max_masked(Var m, const std::vector<std::uint8_t>& col_mask);
/// Row maxima of m over unmasked columns (at least one required).
Var row_max_masked(Var m, const std::vector<std::uint8_t>& col_mask);

/// Cross-entropy -log softmax(logits)[label].
Var nll_loss(Var logits, int label);

}  // namespace ops
}  // namespace srs
