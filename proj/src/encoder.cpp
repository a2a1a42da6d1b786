#include "distenc/encoder.hpp"

#include <cmath>
#include <numeric>

#include "distenc/errors.hpp"
#include "distenc/rng.hpp"

namespace distenc {

void ModelConfig::validate() const {
    if (layers < 0) throw ConfigError("layers must be >= 0");
    if (hidden < 1 || heads < 1 || ff < 1 || vocab < 1 || positions < 1)
        throw ConfigError("hidden, heads, ff, vocab, positions must all be >= 1");
    if (hidden % heads != 0)
        throw ConfigError("hidden (" + std::to_string(hidden) + ") not divisible by heads (" +
                          std::to_string(heads) + ")");
    if (positions <= kReservedPositions)
        throw ConfigError("positions must exceed the " + std::to_string(kReservedPositions) +
                          " reserved rows");
    if (layer_norm_eps <= 0.f) throw ConfigError("layer_norm_eps must be positive");
}

bool ModelConfig::same_shape_except_layers(const ModelConfig& o) const {
    return hidden == o.hidden && heads == o.heads && ff == o.ff && vocab == o.vocab &&
           positions == o.positions;
}

std::int64_t param_count(const ModelConfig& cfg) {
    const std::int64_t d = cfg.hidden, e = cfg.ff, w = cfg.vocab, p = cfg.positions;
    return cfg.layers * (4 * d * d + 2 * d * e + 9 * d + e) + d * (w + p + 2);
}

EncoderModel::EncoderModel(const ModelConfig& cfg) : config(cfg) {
    config.validate();
    const int d = cfg.hidden, e = cfg.ff;
    word_embedding = Tensor(Shape::mat(cfg.vocab, d));
    positional_embedding = Tensor(Shape::mat(cfg.positions, d));
    embedding_gain = Tensor::filled(Shape::vec(d), 1.f);
    embedding_bias = Tensor(Shape::vec(d));
    layers.resize(cfg.layers);
    for (Layer& l : layers) {
        l.wq = Tensor(Shape::mat(d, d));
        l.bq = Tensor(Shape::vec(d));
        l.wk = Tensor(Shape::mat(d, d));
        l.bk = Tensor(Shape::vec(d));
        l.wv = Tensor(Shape::mat(d, d));
        l.bv = Tensor(Shape::vec(d));
        l.wout = Tensor(Shape::mat(d, d));
        l.bout = Tensor(Shape::vec(d));
        l.attn_gain = Tensor::filled(Shape::vec(d), 1.f);
        l.attn_bias = Tensor(Shape::vec(d));
        l.feed_w = Tensor(Shape::mat(e, d));
        l.feed_b = Tensor(Shape::vec(e));
        l.fwd_w = Tensor(Shape::mat(d, e));
        l.fwd_b = Tensor(Shape::vec(d));
        l.ff_gain = Tensor::filled(Shape::vec(d), 1.f);
        l.ff_bias = Tensor(Shape::vec(d));
    }
    lm_head_bias = Tensor(Shape::vec(cfg.vocab));
}

EncoderModel EncoderModel::init_random(const ModelConfig& cfg, std::uint64_t seed, float range) {
    EncoderModel m(cfg);
    SplitMix64 rng(seed);
    // Matrices (embeddings included) get uniform draws in canonical tensor
    // order; vectors keep their structural init (norm gains 1, biases 0).
    for (auto& [name, t] : m.named_tensors()) {
        if (t->shape.rank() != 2) continue;
        for (float& x : t->data) x = rng.next_uniform(-range, range);
    }
    return m;
}

std::vector<std::pair<std::string, Tensor*>> EncoderModel::named_tensors() {
    std::vector<std::pair<std::string, Tensor*>> out;
    out.reserve(5 + 16 * layers.size());
    out.emplace_back("word_embedding", &word_embedding);
    out.emplace_back("positional_embedding", &positional_embedding);
    out.emplace_back("embedding_norm.gain", &embedding_gain);
    out.emplace_back("embedding_norm.bias", &embedding_bias);
    for (size_t i = 0; i < layers.size(); ++i) {
        Layer& l = layers[i];
        const std::string p = "layer" + std::to_string(i) + ".";
        out.emplace_back(p + "attention.wq", &l.wq);
        out.emplace_back(p + "attention.bq", &l.bq);
        out.emplace_back(p + "attention.wk", &l.wk);
        out.emplace_back(p + "attention.bk", &l.bk);
        out.emplace_back(p + "attention.wv", &l.wv);
        out.emplace_back(p + "attention.bv", &l.bv);
        out.emplace_back(p + "attention.wout", &l.wout);
        out.emplace_back(p + "attention.bout", &l.bout);
        out.emplace_back(p + "attention_norm.gain", &l.attn_gain);
        out.emplace_back(p + "attention_norm.bias", &l.attn_bias);
        out.emplace_back(p + "feed.weight", &l.feed_w);
        out.emplace_back(p + "feed.bias", &l.feed_b);
        out.emplace_back(p + "forward.weight", &l.fwd_w);
        out.emplace_back(p + "forward.bias", &l.fwd_b);
        out.emplace_back(p + "ff_norm.gain", &l.ff_gain);
        out.emplace_back(p + "ff_norm.bias", &l.ff_bias);
    }
    out.emplace_back("lm_head.bias", &lm_head_bias);
    return out;
}

std::vector<std::pair<std::string, const Tensor*>> EncoderModel::named_tensors() const {
    auto mut = const_cast<EncoderModel*>(this)->named_tensors();
    std::vector<std::pair<std::string, const Tensor*>> out;
    out.reserve(mut.size());
    for (auto& [name, t] : mut) out.emplace_back(std::move(name), t);
    return out;
}

std::int64_t EncoderModel::audited_param_count() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : named_tensors())
        if (name != "lm_head.bias") n += static_cast<std::int64_t>(t->numel());
    return n;
}

StagedModel stage(Tape& tape, const EncoderModel& model, bool trainable) {
    StagedModel s;
    s.config = model.config;
    s.layers.resize(model.layers.size());
    // Pointer-to-member table mirroring the canonical tensor order.
    auto* mut = const_cast<EncoderModel*>(&model);
    std::vector<std::pair<std::string, Tensor*>> named = mut->named_tensors();
    size_t idx = 0;
    auto next = [&]() {
        Var v = tape.leaf(*named[idx].second, trainable);
        ++idx;
        s.flat.push_back(v);
        return v;
    };
    s.word_embedding = next();
    s.positional_embedding = next();
    s.embedding_gain = next();
    s.embedding_bias = next();
    for (StagedLayer& l : s.layers) {
        l.wq = next();
        l.bq = next();
        l.wk = next();
        l.bk = next();
        l.wv = next();
        l.bv = next();
        l.wout = next();
        l.bout = next();
        l.attn_gain = next();
        l.attn_bias = next();
        l.feed_w = next();
        l.feed_b = next();
        l.fwd_w = next();
        l.fwd_b = next();
        l.ff_gain = next();
        l.ff_bias = next();
    }
    s.lm_head_bias = next();
    return s;
}

HeadAttention head_attention(Tape& tape, const ModelConfig& cfg, const StagedLayer& layer,
                             Var h, int head) {
    if (head < 0 || head >= cfg.heads)
        throw ValueError("head index " + std::to_string(head) + " out of range");
    const int n = tape.value(h).cols();
    if (n < 1) throw ValueError("attention over an empty sequence");
    const int dj = cfg.hidden / cfg.heads;

    const Var q = tape.add_bias(tape.matmul(layer.wq, h), layer.bq);
    const Var k = tape.add_bias(tape.matmul(layer.wk, h), layer.bk);
    const Var v = tape.add_bias(tape.matmul(layer.wv, h), layer.bv);
    const Var qj = tape.slice_rows(q, head * dj, dj);
    const Var kj = tape.slice_rows(k, head * dj, dj);
    const Var vj = tape.slice_rows(v, head * dj, dj);

    // scores[key, query]; softmax over the key axis = per-column here.
    const Var scores = tape.scale(tape.matmul(tape.transpose(kj), qj),
                                  1.f / std::sqrt(static_cast<float>(dj)));
    const Var weights = tape.softmax_columns(scores);
    return HeadAttention{tape.matmul(vj, weights), weights};
}

Var multi_head(Tape& tape, const ModelConfig& cfg, const StagedLayer& layer, Var h) {
    std::vector<Var> heads;
    heads.reserve(cfg.heads);
    for (int j = 0; j < cfg.heads; ++j)
        heads.push_back(head_attention(tape, cfg, layer, h, j).out);
    const Var cat = cfg.heads == 1 ? heads[0] : tape.concat_rows(heads);
    return tape.add_bias(tape.matmul(layer.wout, cat), layer.bout);
}

Var feed_forward(Tape& tape, const StagedLayer& layer, Var h) {
    const Var inner = tape.relu(tape.add_bias(tape.matmul(layer.feed_w, h), layer.feed_b));
    return tape.add_bias(tape.matmul(layer.fwd_w, inner), layer.fwd_b);
}

EncoderOutput encode(Tape& tape, const StagedModel& model, std::span<const int> ids) {
    const ModelConfig& cfg = model.config;
    const int n = static_cast<int>(ids.size());
    if (n < 1) throw ValueError("encode: empty token sequence");
    if (n > cfg.max_sequence())
        throw ValueError("sequence length " + std::to_string(n) + " exceeds the maximum of " +
                         std::to_string(cfg.max_sequence()));
    for (int id : ids)
        if (id < 0 || id >= cfg.vocab)
            throw ValueError("token id " + std::to_string(id) + " outside vocabulary of size " +
                             std::to_string(cfg.vocab));

    std::vector<int> pos(static_cast<size_t>(n));
    std::iota(pos.begin(), pos.end(), 0);
    const Var word = tape.embedding_lookup(model.word_embedding, ids);
    const Var position = tape.embedding_lookup(model.positional_embedding, pos);
    Var h = tape.layer_norm(tape.add(word, position), model.embedding_gain,
                            model.embedding_bias, cfg.layer_norm_eps);

    for (const StagedLayer& layer : model.layers) {
        h = tape.layer_norm(tape.add(h, multi_head(tape, cfg, layer, h)), layer.attn_gain,
                            layer.attn_bias, cfg.layer_norm_eps);
        h = tape.layer_norm(tape.add(h, feed_forward(tape, layer, h)), layer.ff_gain,
                            layer.ff_bias, cfg.layer_norm_eps);
    }

    const Var logits = tape.add_bias(tape.matmul(model.word_embedding, h), model.lm_head_bias);
    return EncoderOutput{h, tape.log_softmax_columns(logits)};
}

}  // namespace distenc
