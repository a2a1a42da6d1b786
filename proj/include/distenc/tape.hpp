#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "distenc/tensor.hpp"

namespace distenc {

// Handle to a node on a Tape. Plain index; valid only for the tape that
// produced it.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// A masked position: where in the sequence, and which token was there.
struct MaskEntry {
    int position = 0;
    int token_id = 0;
};

enum class Op : uint8_t {
    kLeaf,
    kMatmul,
    kTranspose,
    kAdd,
    kAddBias,
    kMul,
    kScale,
    kRelu,
    kExp,
    kSoftmaxCols,
    kLogSoftmaxCols,
    kLayerNorm,
    kEmbeddingLookup,
    kConcatRows,
    kSliceRows,
    kCol,
    kSum,
    kKlDiv,
    kCosineSim,
    kCrossEntropy,
};

const char* op_name(Op op);

// Reverse-mode tape over dense float tensors. Single-threaded; distinct
// tapes are independent. Node order is topological by construction: every
// input id precedes its consumer.
//
// Reductions (sum, mean, variance, softmax normalizers, divergences, norms)
// accumulate in double; everything else stays in 32-bit floats.
class Tape {
public:
    // check_finite scans every forward result and rejects NaN/Inf instead of
    // letting it propagate.
    explicit Tape(bool check_finite = true) : check_finite_(check_finite) {}

    Var leaf(Tensor t, bool requires_grad);
    Var constant(Tensor t) { return leaf(std::move(t), false); }
    Var constant_scalar(float v) { return leaf(Tensor::scalar(v), false); }

    /// c[m x n] = a[m x k] . b[k x n]
    Var matmul(Var a, Var b);
    Var transpose(Var x);
    Var add(Var a, Var b);
    /// y[d x n] = x[d x n] + bias[d] broadcast over columns.
    Var add_bias(Var x, Var bias);
    /// Elementwise product, same shapes.
    Var mul(Var a, Var b);
    Var scale(Var x, float c);
    Var relu(Var x);
    Var exp(Var x);
    /// Each column max-subtracted, exponentiated, normalized to sum 1.
    Var softmax_columns(Var x);
    Var log_softmax_columns(Var x);
    /// Per-column standardization over the row axis, then gain/bias affine.
    Var layer_norm(Var x, Var gain, Var bias, float eps);
    /// out[d x n]: column i is row ids[i] of table[V x d].
    Var embedding_lookup(Var table, std::span<const int> ids);
    Var concat_rows(std::span<const Var> parts);
    Var slice_rows(Var x, int begin, int count);
    /// Column j of a matrix as a rank-1 tensor.
    Var col(Var x, int j);
    /// Sum of all entries, as a scalar node.
    Var sum(Var x);
    /// Sum over columns of D_KL(p_col || q_col). Columns are normalized
    /// exactly before the divergence (inputs must already sum to 1 within
    /// 1e-5), which keeps the result nonnegative. q == 0 where p > 0 is an
    /// infinite divergence and errors out, never clips.
    Var kl_div(Var p, Var q);
    Var cosine_sim(Var u, Var v);
    /// Sum over entries of -log_probs[token_id, position].
    Var cross_entropy(Var log_probs, std::span<const MaskEntry> entries);

    // Accumulates d(root)/d(leaf) into the grad buffer of every
    // requires-grad leaf. Interior node grads are scratch, reset per call;
    // leaf grads accumulate across calls until zero_grad().
    void backward(Var root);
    void zero_grad();

    const Tensor& value(Var v) const { return nodes_[check(v)].t; }
    std::span<const float> grad(Var v) const { return nodes_[check(v)].t.grad; }
    Tensor grad_tensor(Var v) const;
    bool requires_grad(Var v) const { return nodes_[check(v)].requires_grad; }

    size_t size() const { return nodes_.size(); }
    // Drop every node with id >= mark. Lets a long-lived tape reuse staged
    // constants (e.g. a frozen teacher) across many forward passes.
    void truncate(size_t mark);
    void reset() { nodes_.clear(); }

private:
    struct Node {
        Op op = Op::kLeaf;
        Tensor t;
        std::vector<int> inputs;
        bool requires_grad = false;
        float fattr = 0.f;           // scale factor / layer_norm eps
        int i0 = 0, i1 = 0;          // slice begin/count, column index
        std::vector<int> iattr;      // lookup ids; cross-entropy entries (pos, id) flattened
    };

    int check(Var v) const;
    Var push(Node n);
    void check_finite_or_throw(const Tensor& t, Op op) const;
    void backward_node(int id);

    std::vector<Node> nodes_;
    bool check_finite_ = true;
};

}  // namespace distenc
