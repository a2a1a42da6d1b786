#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "distenc/corpus.hpp"
#include "distenc/distill.hpp"
#include "distenc/encoder.hpp"

namespace distenc {

struct OptimizerConfig {
    float lr = 5e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    float warmup_frac = 0.05f;  // linear warmup over this fraction of total steps
    float clip_norm = 1.0f;     // global-norm gradient clip; <= 0 disables
    void validate() const;
};

struct DataConfig {
    int n_max = 64;
    int batch_size = 8;
    float mask_rate = 0.15f;
    void validate() const;
};

// Adaptive-moment optimizer with bias correction. Buffers mirror the model's
// canonical tensor order; shapes never change across steps.
class AdamState {
  public:
    explicit AdamState(const EncoderModel& model, const OptimizerConfig& cfg);
    void apply(EncoderModel& model, const std::vector<Tensor>& grads, float lr_now);
    int steps_taken() const { return t_; }

  private:
    OptimizerConfig cfg_;
    std::vector<std::vector<float>> m_, v_;
    int t_ = 0;
};

// Scales all gradients in place so their global L2 norm is at most max_norm;
// returns the pre-clip norm.
double clip_gradients(std::vector<Tensor>& grads, float max_norm);

struct LossRecord {
    int step = 0;  // 1-based
    float soft_label = 0.f;
    float cosine = 0.f;
    float mlm = 0.f;
    float total = 0.f;
};
// One tab-separated line per record: step, soft_label, cosine, mlm, total.
std::string format_loss_record(const LossRecord& r);
std::string format_loss_log(const std::vector<LossRecord>& log);

struct TrainResult {
    EncoderModel model;
    std::vector<LossRecord> log;
    MaskedBatch final_batch;  // the last step's masked batch, for loss replay
};

using StepCallback = std::function<void(const LossRecord&)>;

// Masked-LM pretraining from random init. Every logged loss is the model's
// loss on that step's batch after the update, so the final record replays
// exactly against the returned model.
TrainResult train_teacher(const ModelConfig& config, const std::string& corpus_text,
                          const Vocabulary& vocab, int steps, std::uint64_t seed,
                          const OptimizerConfig& opt, const DataConfig& data,
                          const StepCallback& on_step = nullptr);

// Student distillation against a frozen teacher: init_student, then optimize
// the blended objective. The teacher is never mutated.
TrainResult distill(const EncoderModel& teacher, const ModelConfig& student_config,
                    const std::string& corpus_text, const Vocabulary& vocab, int steps,
                    std::uint64_t seed, const DistillConfig& dcfg, const OptimizerConfig& opt,
                    const DataConfig& data, const StepCallback& on_step = nullptr);

struct TrainingMeta {
    std::int64_t step = 0;
    std::uint64_t seed = 0;
    std::vector<float> loss_tail;  // most recent total losses, at most 16
};

struct Checkpoint {
    std::uint32_t version = 0;
    EncoderModel model;
    TrainingMeta meta;
    std::vector<std::string> vocab_tokens;  // empty when none was stored
};

// Binary layout: 8-byte magic "DCMBERT1", u32 version, u64 metadata length,
// JSON metadata (config, tensor manifest with byte offsets, training record,
// vocabulary), little-endian float32 payload, u64 FNV-1a digest of everything
// before it. save -> load -> save is byte-identical.
inline constexpr char kCheckpointMagic[8] = {'D', 'C', 'M', 'B', 'E', 'R', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const EncoderModel& model, const TrainingMeta& meta,
                     const std::vector<std::string>& vocab_tokens, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace distenc
