#pragma once

#include <span>

#include "distenc/corpus.hpp"
#include "distenc/encoder.hpp"

namespace distenc {

struct DistillConfig {
    float alpha = 0.5f;  // soft-label weight
    float beta = 0.3f;   // cosine weight
    float gamma = 0.2f;  // masked-LM weight
    int copy_stride = 2;
    float temperature = 1.f;  // softens both distributions before the KL term
    bool reverse_kl = false;  // teacher-first divergence instead of the default student-first
    bool raw_cosine = false;  // sum raw similarity instead of 1 - cos (anti-aligning; for study)
    void validate() const;
};

struct LossBreakdown {
    float soft_label = 0.f;
    float cosine = 0.f;
    float mlm = 0.f;
    float total = 0.f;
    int token_count = 0;
    int masked_count = 0;
};

// Student built from a trained teacher: embeddings, embedding norm, and LM
// head bias copied verbatim; student layer i takes teacher layer
// copy_stride * i. All storage is deep-copied — the models never alias.
EncoderModel init_student(const EncoderModel& teacher, const ModelConfig& student_config,
                          int copy_stride = 2);

// Mean per-token KL between student and teacher vocabulary distributions, all
// real positions. Inputs are per-sequence log-prob Vars (vocab x n_k).
Var soft_label_loss(Tape& tape, std::span<const Var> student_log_probs,
                    std::span<const Var> teacher_log_probs, float temperature = 1.f,
                    bool reverse_kl = false);

// Mean per-token (1 - cos) between student and teacher hidden columns; with
// raw = true the raw similarity is summed instead.
Var cosine_loss(Tape& tape, std::span<const Var> student_hidden,
                std::span<const Var> teacher_hidden, bool raw = false);

// Mean negative log-probability of the original token over masked positions.
Var mlm_loss(Tape& tape, std::span<const Var> student_log_probs, const MaskedBatch& batch);

struct DistillLoss {
    LossBreakdown breakdown;
    Var root;  // the single differentiation root: the weighted total
};
DistillLoss distill_loss(Tape& tape, std::span<const EncoderOutput> student,
                         std::span<const EncoderOutput> teacher, const MaskedBatch& batch,
                         const DistillConfig& config);

}  // namespace distenc
