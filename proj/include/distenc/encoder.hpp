#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "distenc/tape.hpp"
#include "distenc/tensor.hpp"

namespace distenc {

// Architecture descriptor: layer count, hidden width, head count, feed-forward
// inner width, vocabulary size, position-table size.
struct ModelConfig {
    int layers = 0;
    int hidden = 0;
    int heads = 0;
    int ff = 0;
    int vocab = 0;
    int positions = 0;
    float layer_norm_eps = 1e-5f;

    // The last two position rows are kept in reserve (RoBERTa-style table
    // sizing), so the longest admissible sequence is positions - 2.
    static constexpr int kReservedPositions = 2;
    int max_sequence() const { return positions - kReservedPositions; }

    void validate() const;  // throws ConfigError on a bad combination
    bool same_shape_except_layers(const ModelConfig& other) const;
    bool operator==(const ModelConfig&) const = default;
};

// Closed-form trainable-parameter count:
//   layers * (4*hidden^2 + 2*hidden*ff + 9*hidden + ff)
//   + hidden * (vocab + positions + 2)
// The LM head bias is tied-projection extra and deliberately not included.
std::int64_t param_count(const ModelConfig& cfg);

// Full weight set for one encoder: embeddings, per-layer attention/feed-forward
// blocks with their norms, and the LM head bias (projection itself is tied to
// word_embedding).
struct EncoderModel {
    struct Layer {
        Tensor wq, bq, wk, bk, wv, bv, wout, bout;  // attention projections
        Tensor attn_gain, attn_bias;                // norm after attention residual
        Tensor feed_w, feed_b;                      // ff x hidden expansion
        Tensor fwd_w, fwd_b;                        // hidden x ff contraction
        Tensor ff_gain, ff_bias;                    // norm after feed-forward residual
    };

    ModelConfig config;
    Tensor word_embedding;        // vocab x hidden
    Tensor positional_embedding;  // positions x hidden
    Tensor embedding_gain, embedding_bias;
    std::vector<Layer> layers;
    Tensor lm_head_bias;  // vocab

    explicit EncoderModel(const ModelConfig& cfg);  // zero weights, norm gains at 1
    static EncoderModel init_random(const ModelConfig& cfg, std::uint64_t seed,
                                    float range = 0.02f);

    // Canonical (name, tensor) enumeration; fixed order, lm_head_bias last.
    std::vector<std::pair<std::string, Tensor*>> named_tensors();
    std::vector<std::pair<std::string, const Tensor*>> named_tensors() const;

    // Scalar count over stored tensors, excluding lm_head_bias; must equal
    // param_count(config) exactly.
    std::int64_t audited_param_count() const;
};

// Model weights staged onto a tape as leaves. `flat` lists every Var in the
// same canonical order as EncoderModel::named_tensors().
struct StagedLayer {
    Var wq, bq, wk, bk, wv, bv, wout, bout;
    Var attn_gain, attn_bias;
    Var feed_w, feed_b, fwd_w, fwd_b;
    Var ff_gain, ff_bias;
};
struct StagedModel {
    ModelConfig config;
    Var word_embedding, positional_embedding;
    Var embedding_gain, embedding_bias;
    std::vector<StagedLayer> layers;
    Var lm_head_bias;
    std::vector<Var> flat;
};
StagedModel stage(Tape& tape, const EncoderModel& model, bool trainable);

struct HeadAttention {
    Var out;      // (hidden/heads) x n
    Var weights;  // n x n, column j = attention distribution over keys for query j
};
// Scaled dot-product attention for one head of one layer.
HeadAttention head_attention(Tape& tape, const ModelConfig& cfg, const StagedLayer& layer,
                             Var h, int head);
// All heads concatenated row-wise, then the output projection.
Var multi_head(Tape& tape, const ModelConfig& cfg, const StagedLayer& layer, Var h);
// fwd_w * relu(feed_w * h + feed_b) + fwd_b.
Var feed_forward(Tape& tape, const StagedLayer& layer, Var h);

struct EncoderOutput {
    Var hidden;     // hidden x n, final-layer representation
    Var log_probs;  // vocab x n, column-wise log-softmax over the vocabulary
};
// Full forward pass: normed (word + position) embeddings, `layers` rounds of
// post-norm residual attention + feed-forward, tied LM head.
EncoderOutput encode(Tape& tape, const StagedModel& model, std::span<const int> ids);

}  // namespace distenc
