#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "distenc/corpus.hpp"
#include "distenc/encoder.hpp"

namespace distenc {

struct F1Example {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};
struct F1Report {
    std::vector<F1Example> examples;
    double precision = 0.0;  // micro-averages over all examples
    double recall = 0.0;
    double f1 = 0.0;
};
// Multiset-overlap precision/recall/F1 per example plus the micro-average.
// f1 is 0 whenever precision + recall is 0. Swapping predicted and gold swaps
// precision with recall and leaves f1 unchanged.
F1Report token_f1(std::span<const std::vector<std::string>> predicted,
                  std::span<const std::vector<std::string>> gold);

// Softmax over per-class entailment scores; the result sums to 1 and is
// invariant under shifting every score by a constant.
std::map<std::string, double> zero_shot_classify(const std::map<std::string, double>& scores);

struct MlmEvalReport {
    double accuracy = 0.0;    // top-1 over masked positions; argmax ties break low
    double perplexity = 0.0;  // exp(mean NLL of the original token)
    int masked_count = 0;
};
// Batches must already be masked; the model reads the masked rows.
MlmEvalReport mlm_eval(const EncoderModel& model, std::span<const MaskedBatch> batches);

struct AgreementReport {
    double mean_cosine = 0.0;  // mean over tokens of cos(student, teacher) hidden columns
    double mean_kl = 0.0;      // mean per-token KL(student || teacher)
    int token_count = 0;
};
// Runs both models over the same (unmasked) rows and compares outputs.
AgreementReport agreement_eval(const EncoderModel& student, const EncoderModel& teacher,
                               std::span<const MaskedBatch> batches);

// Matmul flops of the layer stack for one length-n sequence:
//   layers * (8*hidden^2*n + 4*hidden*n^2 + 4*hidden*ff*n).
// Embeddings and the LM head are deliberately outside the count, so the ratio
// between two models that differ only in depth is exact.
std::int64_t layer_stack_flops(const ModelConfig& cfg, int seq_len);

struct BenchReport {
    double teacher_mean_s = 0.0;  // seconds per forward pass of the whole batch
    double teacher_median_s = 0.0;
    double student_mean_s = 0.0;
    double student_median_s = 0.0;
    double speedup = 0.0;  // teacher_median_s / student_median_s
    std::int64_t teacher_flops = 0;  // layer-stack flops per batch forward
    std::int64_t student_flops = 0;
    double flop_ratio = 0.0;
    std::string warning;  // set when hidden sizes differ and the ratio is not meaningful
};
// Single-threaded wall-time comparison on identical random inputs; 3 warmup
// passes are discarded, then `iters` passes are timed per model.
BenchReport bench(const EncoderModel& teacher, const EncoderModel& student, int seq_len,
                  int batch, int iters, std::uint64_t seed = 7);

}  // namespace distenc
