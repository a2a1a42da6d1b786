#include "distenc/training.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "distenc/errors.hpp"
#include "distenc/rng.hpp"
#include "json.hpp"

#include "distenc/digest.hpp"

namespace distenc {

using nlohmann::json;

void OptimizerConfig::validate() const {
    if (lr <= 0.f) throw ConfigError("learning rate must be positive");
    if (beta1 < 0.f || beta1 >= 1.f || beta2 < 0.f || beta2 >= 1.f)
        throw ConfigError("moment decays must be in [0, 1)");
    if (eps <= 0.f) throw ConfigError("optimizer eps must be positive");
    if (warmup_frac < 0.f || warmup_frac > 1.f)
        throw ConfigError("warmup_frac must be in [0, 1]");
}

void DataConfig::validate() const {
    if (n_max < 2) throw ConfigError("n_max must be >= 2");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (mask_rate < 0.f || mask_rate >= 1.f) throw ConfigError("mask_rate must be in [0, 1)");
}

AdamState::AdamState(const EncoderModel& model, const OptimizerConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    for (const auto& [name, t] : model.named_tensors()) {
        m_.emplace_back(t->data.size(), 0.f);
        v_.emplace_back(t->data.size(), 0.f);
    }
}

void AdamState::apply(EncoderModel& model, const std::vector<Tensor>& grads, float lr_now) {
    auto named = model.named_tensors();
    if (grads.size() != named.size() || grads.size() != m_.size())
        throw ValueError("gradient list does not match the parameter list");
    ++t_;
    const double bc1 = 1.0 - std::pow(static_cast<double>(cfg_.beta1), t_);
    const double bc2 = 1.0 - std::pow(static_cast<double>(cfg_.beta2), t_);
    for (size_t i = 0; i < named.size(); ++i) {
        Tensor* p = named[i].second;
        if (grads[i].shape != p->shape)
            throw ShapeError("gradient shape mismatch for " + named[i].first + ": " +
                             grads[i].shape.str() + " vs " + p->shape.str());
        float* m = m_[i].data();
        float* v = v_[i].data();
        const float* g = grads[i].data.data();
        float* x = p->data.data();
        for (size_t j = 0; j < p->data.size(); ++j) {
            m[j] = cfg_.beta1 * m[j] + (1.f - cfg_.beta1) * g[j];
            v[j] = cfg_.beta2 * v[j] + (1.f - cfg_.beta2) * g[j] * g[j];
            const double mh = m[j] / bc1;
            const double vh = v[j] / bc2;
            x[j] = static_cast<float>(x[j] - lr_now * mh / (std::sqrt(vh) + cfg_.eps));
        }
    }
}

double clip_gradients(std::vector<Tensor>& grads, float max_norm) {
    double sq = 0.0;
    for (const Tensor& g : grads)
        for (float x : g.data) sq += static_cast<double>(x) * x;
    const double norm = std::sqrt(sq);
    if (max_norm > 0.f && norm > max_norm) {
        const float s = static_cast<float>(max_norm / norm);
        for (Tensor& g : grads)
            for (float& x : g.data) x *= s;
    }
    return norm;
}

std::string format_loss_record(const LossRecord& r) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%d\t%.9g\t%.9g\t%.9g\t%.9g\n", r.step,
                  static_cast<double>(r.soft_label), static_cast<double>(r.cosine),
                  static_cast<double>(r.mlm), static_cast<double>(r.total));
    return buf;
}

std::string format_loss_log(const std::vector<LossRecord>& log) {
    std::string out;
    for (const LossRecord& r : log) out += format_loss_record(r);
    return out;
}

namespace {

// Cycles over seed-shuffled epochs of batches and applies per-step masking,
// retrying with derived seeds until the batch has at least one masked
// position.
class BatchSchedule {
  public:
    BatchSchedule(std::string corpus, const Vocabulary& vocab, const DataConfig& data,
                  std::uint64_t seed)
        : corpus_(std::move(corpus)), vocab_(vocab), data_(data), seed_(seed) {}

    MaskedBatch next(int step) {
        if (cursor_ >= epoch_.size()) {
            epoch_ = make_batches(corpus_, vocab_, data_.batch_size, data_.n_max,
                                  derive_seed(seed_, 1 + static_cast<std::uint64_t>(epochs_)));
            ++epochs_;
            cursor_ = 0;
        }
        const MaskedBatch& clean = epoch_[cursor_++];
        for (int attempt = 0; attempt < 16; ++attempt) {
            const std::uint64_t s =
                derive_seed(seed_, (1ull << 32) + 16ull * static_cast<std::uint64_t>(step) +
                                       static_cast<std::uint64_t>(attempt));
            MaskedBatch masked = apply_masking(clean, data_.mask_rate, s, vocab_.size());
            if (masked.total_masked() > 0 || data_.mask_rate == 0.f) return masked;
        }
        throw ValueError("no maskable positions after 16 attempts at step " +
                         std::to_string(step));
    }

  private:
    std::string corpus_;
    const Vocabulary& vocab_;
    DataConfig data_;
    std::uint64_t seed_;
    std::vector<MaskedBatch> epoch_;
    size_t cursor_ = 0;
    int epochs_ = 0;
};

float lr_at(const OptimizerConfig& opt, int step, int total_steps) {
    const int warmup =
        std::max(1, static_cast<int>(std::lround(opt.warmup_frac * total_steps)));
    if (step >= warmup) return opt.lr;
    return opt.lr * static_cast<float>(step) / static_cast<float>(warmup);
}

void check_train_inputs(const ModelConfig& cfg, const Vocabulary& vocab, int steps,
                        const OptimizerConfig& opt, const DataConfig& data) {
    cfg.validate();
    opt.validate();
    data.validate();
    if (steps < 1) throw ConfigError("steps must be >= 1");
    if (data.n_max > cfg.max_sequence())
        throw ConfigError("n_max " + std::to_string(data.n_max) +
                          " exceeds the longest admissible sequence " +
                          std::to_string(cfg.max_sequence()));
    if (vocab.size() > cfg.vocab)
        throw ConfigError("vocabulary of " + std::to_string(vocab.size()) +
                          " tokens exceeds the model vocabulary " + std::to_string(cfg.vocab));
}

std::vector<Tensor> collect_gradients(Tape& tape, const StagedModel& sm) {
    std::vector<Tensor> grads;
    grads.reserve(sm.flat.size());
    for (Var v : sm.flat) grads.push_back(tape.grad_tensor(v));
    return grads;
}

}  // namespace

TrainResult train_teacher(const ModelConfig& config, const std::string& corpus_text,
                          const Vocabulary& vocab, int steps, std::uint64_t seed,
                          const OptimizerConfig& opt, const DataConfig& data,
                          const StepCallback& on_step) {
    check_train_inputs(config, vocab, steps, opt, data);

    TrainResult res{EncoderModel::init_random(config, derive_seed(seed, 0)), {}, {}};
    AdamState adam(res.model, opt);
    BatchSchedule schedule(corpus_text, vocab, data, seed);

    for (int step = 1; step <= steps; ++step) {
        MaskedBatch batch = schedule.next(step);
        try {
            Tape tape;
            StagedModel sm = stage(tape, res.model, true);
            std::vector<Var> lps;
            lps.reserve(batch.rows.size());
            for (size_t k = 0; k < batch.rows.size(); ++k)
                lps.push_back(encode(tape, sm, batch.sequence(static_cast<int>(k))).log_probs);
            const Var loss = mlm_loss(tape, lps, batch);
            tape.backward(loss);

            std::vector<Tensor> grads = collect_gradients(tape, sm);
            clip_gradients(grads, opt.clip_norm);
            adam.apply(res.model, grads, lr_at(opt, step, steps));

            // The logged value is the post-update loss on this batch, so the
            // last record replays exactly against the returned model.
            Tape probe;
            StagedModel pm = stage(probe, res.model, false);
            std::vector<Var> plps;
            plps.reserve(batch.rows.size());
            for (size_t k = 0; k < batch.rows.size(); ++k)
                plps.push_back(encode(probe, pm, batch.sequence(static_cast<int>(k))).log_probs);
            const float after = probe.value(mlm_loss(probe, plps, batch)).data[0];

            const LossRecord rec{step, 0.f, 0.f, after, after};
            res.log.push_back(rec);
            if (on_step) on_step(rec);
        } catch (const NonFiniteError& e) {
            throw Error("training diverged at step " + std::to_string(step) + ": " + e.what());
        }
        if (step == steps) res.final_batch = std::move(batch);
    }
    return res;
}

TrainResult distill(const EncoderModel& teacher, const ModelConfig& student_config,
                    const std::string& corpus_text, const Vocabulary& vocab, int steps,
                    std::uint64_t seed, const DistillConfig& dcfg, const OptimizerConfig& opt,
                    const DataConfig& data, const StepCallback& on_step) {
    check_train_inputs(student_config, vocab, steps, opt, data);
    dcfg.validate();

    TrainResult res{init_student(teacher, student_config, dcfg.copy_stride), {}, {}};
    AdamState adam(res.model, opt);
    BatchSchedule schedule(corpus_text, vocab, data, seed);

    Tape teacher_tape;
    const StagedModel st = stage(teacher_tape, teacher, false);
    const size_t watermark = teacher_tape.size();

    for (int step = 1; step <= steps; ++step) {
        MaskedBatch batch = schedule.next(step);
        try {
            // Teacher forward in inference mode; keep only the values.
            std::vector<Tensor> t_hidden, t_log_probs;
            for (size_t k = 0; k < batch.rows.size(); ++k) {
                const EncoderOutput o =
                    encode(teacher_tape, st, batch.sequence(static_cast<int>(k)));
                t_hidden.push_back(teacher_tape.value(o.hidden));
                t_log_probs.push_back(teacher_tape.value(o.log_probs));
            }
            teacher_tape.truncate(watermark);

            auto teacher_outputs = [&](Tape& tape) {
                std::vector<EncoderOutput> outs;
                outs.reserve(t_hidden.size());
                for (size_t k = 0; k < t_hidden.size(); ++k)
                    outs.push_back(
                        EncoderOutput{tape.constant(t_hidden[k]), tape.constant(t_log_probs[k])});
                return outs;
            };
            auto student_outputs = [&](Tape& tape, const StagedModel& m) {
                std::vector<EncoderOutput> outs;
                outs.reserve(batch.rows.size());
                for (size_t k = 0; k < batch.rows.size(); ++k)
                    outs.push_back(encode(tape, m, batch.sequence(static_cast<int>(k))));
                return outs;
            };

            Tape tape;
            StagedModel sm = stage(tape, res.model, true);
            const DistillLoss dl =
                distill_loss(tape, student_outputs(tape, sm), teacher_outputs(tape), batch, dcfg);
            tape.backward(dl.root);

            std::vector<Tensor> grads = collect_gradients(tape, sm);
            clip_gradients(grads, opt.clip_norm);
            adam.apply(res.model, grads, lr_at(opt, step, steps));

            Tape probe;
            StagedModel pm = stage(probe, res.model, false);
            const DistillLoss after = distill_loss(probe, student_outputs(probe, pm),
                                                   teacher_outputs(probe), batch, dcfg);

            const LossRecord rec{step, after.breakdown.soft_label, after.breakdown.cosine,
                                 after.breakdown.mlm, after.breakdown.total};
            res.log.push_back(rec);
            if (on_step) on_step(rec);
        } catch (const NonFiniteError& e) {
            throw Error("distillation diverged at step " + std::to_string(step) + ": " +
                        e.what());
        }
        if (step == steps) res.final_batch = std::move(batch);
    }
    return res;
}

// ---- checkpoint I/O ----

namespace {

void append_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void append_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
std::uint32_t read_u32(const std::string& s, size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[at + i])) << (8 * i);
    return v;
}
std::uint64_t read_u64(const std::string& s, size_t at) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[at + i])) << (8 * i);
    return v;
}

json config_to_json(const ModelConfig& c) {
    return json{{"layers", c.layers},       {"hidden", c.hidden},
                {"heads", c.heads},         {"ff", c.ff},
                {"vocab", c.vocab},         {"positions", c.positions},
                {"layer_norm_eps", c.layer_norm_eps}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.layers = j.at("layers").get<int>();
    c.hidden = j.at("hidden").get<int>();
    c.heads = j.at("heads").get<int>();
    c.ff = j.at("ff").get<int>();
    c.vocab = j.at("vocab").get<int>();
    c.positions = j.at("positions").get<int>();
    c.layer_norm_eps = j.at("layer_norm_eps").get<float>();
    return c;
}

constexpr size_t kHeaderBytes = 8 + 4 + 8;  // magic, version, metadata length

}  // namespace

void save_checkpoint(const EncoderModel& model, const TrainingMeta& meta,
                     const std::vector<std::string>& vocab_tokens, const std::string& path) {
    json meta_json;
    meta_json["config"] = config_to_json(model.config);

    json manifest = json::array();
    std::uint64_t offset = 0;
    const auto named = model.named_tensors();
    for (const auto& [name, t] : named) {
        json entry;
        entry["name"] = name;
        json shape = json::array();
        for (int i = 0; i < t->shape.rank(); ++i) shape.push_back(t->shape.dim(i));
        entry["shape"] = shape;
        entry["offset"] = offset;
        manifest.push_back(entry);
        offset += static_cast<std::uint64_t>(t->data.size()) * sizeof(float);
    }
    meta_json["tensors"] = manifest;

    json training;
    training["step"] = meta.step;
    training["seed"] = meta.seed;
    json tail = json::array();
    const size_t tail_start = meta.loss_tail.size() > 16 ? meta.loss_tail.size() - 16 : 0;
    for (size_t i = tail_start; i < meta.loss_tail.size(); ++i) tail.push_back(meta.loss_tail[i]);
    training["loss_tail"] = tail;
    meta_json["training"] = training;
    meta_json["vocab"] = vocab_tokens;

    const std::string meta_str = meta_json.dump();

    std::string out;
    out.reserve(kHeaderBytes + meta_str.size() + offset + 8);
    out.append(kCheckpointMagic, sizeof(kCheckpointMagic));
    append_u32(out, kCheckpointVersion);
    append_u64(out, meta_str.size());
    out += meta_str;
    for (const auto& [name, t] : named)
        out.append(reinterpret_cast<const char*>(t->data.data()), t->data.size() * sizeof(float));
    append_u64(out, fnv1a64(out.data(), out.size()));

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    if (bytes.size() < kHeaderBytes + 8)
        throw IoError("checkpoint truncated: only " + std::to_string(bytes.size()) + " bytes");
    if (std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
        throw IoError("bad checkpoint magic at offset 0");
    const std::uint32_t version = read_u32(bytes, 8);
    if (version != kCheckpointVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version) +
                      " (expected " + std::to_string(kCheckpointVersion) + ")");
    const std::uint64_t meta_len = read_u64(bytes, 12);
    if (kHeaderBytes + meta_len + 8 > bytes.size())
        throw IoError("checkpoint truncated at offset " + std::to_string(kHeaderBytes) +
                      ": metadata of " + std::to_string(meta_len) + " bytes does not fit");

    const std::uint64_t stored = read_u64(bytes, bytes.size() - 8);
    const std::uint64_t computed = fnv1a64(bytes.data(), bytes.size() - 8);
    if (stored != computed)
        throw IoError("checkpoint digest mismatch at offset " + std::to_string(bytes.size() - 8));

    json meta_json;
    try {
        meta_json = json::parse(bytes.substr(kHeaderBytes, meta_len));
    } catch (const json::exception& e) {
        throw IoError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
    }

    Checkpoint cp{version, [&] {
                      try {
                          return EncoderModel(config_from_json(meta_json.at("config")));
                      } catch (const json::exception& e) {
                          throw IoError(std::string("checkpoint config block malformed: ") +
                                        e.what());
                      }
                  }(),
                  {}, {}};

    const size_t payload_at = kHeaderBytes + meta_len;
    const size_t payload_bytes = bytes.size() - 8 - payload_at;
    auto named = cp.model.named_tensors();
    std::uint64_t expect_offset = 0;
    try {
        const json& manifest = meta_json.at("tensors");
        if (manifest.size() != named.size())
            throw IoError("tensor manifest lists " + std::to_string(manifest.size()) +
                          " tensors, model has " + std::to_string(named.size()));
        for (size_t i = 0; i < named.size(); ++i) {
            const json& entry = manifest.at(i);
            if (entry.at("name").get<std::string>() != named[i].first)
                throw IoError("tensor manifest entry " + std::to_string(i) + " is " +
                              entry.at("name").get<std::string>() + ", expected " +
                              named[i].first);
            const json& shape = entry.at("shape");
            Tensor* t = named[i].second;
            bool shape_ok = static_cast<int>(shape.size()) == t->shape.rank();
            for (int d = 0; shape_ok && d < t->shape.rank(); ++d)
                shape_ok = shape.at(d).get<int>() == t->shape.dim(d);
            if (!shape_ok)
                throw IoError("tensor " + named[i].first + " has an unexpected stored shape");
            if (entry.at("offset").get<std::uint64_t>() != expect_offset)
                throw IoError("tensor " + named[i].first + " offset " +
                              std::to_string(entry.at("offset").get<std::uint64_t>()) +
                              " is not the expected " + std::to_string(expect_offset));
            const size_t nbytes = t->data.size() * sizeof(float);
            if (expect_offset + nbytes > payload_bytes)
                throw IoError("tensor " + named[i].first + " runs past the payload");
            std::memcpy(t->data.data(), bytes.data() + payload_at + expect_offset, nbytes);
            expect_offset += nbytes;
        }
        if (expect_offset != payload_bytes)
            throw IoError("payload holds " + std::to_string(payload_bytes) +
                          " bytes, manifest accounts for " + std::to_string(expect_offset));

        const json& training = meta_json.at("training");
        cp.meta.step = training.at("step").get<std::int64_t>();
        cp.meta.seed = training.at("seed").get<std::uint64_t>();
        for (const json& v : training.at("loss_tail")) cp.meta.loss_tail.push_back(v.get<float>());
        if (meta_json.contains("vocab"))
            for (const json& v : meta_json.at("vocab"))
                cp.vocab_tokens.push_back(v.get<std::string>());
    } catch (const json::exception& e) {
        throw IoError(std::string("checkpoint metadata malformed: ") + e.what());
    }
    return cp;
}

}  // namespace distenc
