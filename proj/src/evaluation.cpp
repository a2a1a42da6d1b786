#include "distenc/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <unordered_map>

#include "distenc/errors.hpp"
#include "distenc/rng.hpp"

namespace distenc {

F1Report token_f1(std::span<const std::vector<std::string>> predicted,
                  std::span<const std::vector<std::string>> gold) {
    if (predicted.size() != gold.size())
        throw ValueError("token_f1: " + std::to_string(predicted.size()) + " predictions vs " +
                         std::to_string(gold.size()) + " references");
    F1Report report;
    std::int64_t overlap_sum = 0, pred_sum = 0, gold_sum = 0;
    for (size_t k = 0; k < predicted.size(); ++k) {
        std::unordered_map<std::string, int> counts;
        for (const std::string& t : gold[k]) ++counts[t];
        std::int64_t overlap = 0;
        for (const std::string& t : predicted[k]) {
            auto it = counts.find(t);
            if (it != counts.end() && it->second > 0) {
                --it->second;
                ++overlap;
            }
        }
        F1Example e;
        e.precision = predicted[k].empty() ? 0.0 : static_cast<double>(overlap) / predicted[k].size();
        e.recall = gold[k].empty() ? 0.0 : static_cast<double>(overlap) / gold[k].size();
        e.f1 = (e.precision + e.recall) == 0.0
                   ? 0.0
                   : 2.0 * e.precision * e.recall / (e.precision + e.recall);
        report.examples.push_back(e);
        overlap_sum += overlap;
        pred_sum += static_cast<std::int64_t>(predicted[k].size());
        gold_sum += static_cast<std::int64_t>(gold[k].size());
    }
    report.precision = pred_sum == 0 ? 0.0 : static_cast<double>(overlap_sum) / pred_sum;
    report.recall = gold_sum == 0 ? 0.0 : static_cast<double>(overlap_sum) / gold_sum;
    report.f1 = (report.precision + report.recall) == 0.0
                    ? 0.0
                    : 2.0 * report.precision * report.recall / (report.precision + report.recall);
    return report;
}

std::map<std::string, double> zero_shot_classify(const std::map<std::string, double>& scores) {
    if (scores.empty()) throw ValueError("zero_shot_classify: no classes");
    double mx = scores.begin()->second;
    for (const auto& [cls, s] : scores) {
        if (!std::isfinite(s)) throw ValueError("zero_shot_classify: non-finite score for " + cls);
        mx = std::max(mx, s);
    }
    double z = 0.0;
    std::map<std::string, double> out;
    for (const auto& [cls, s] : scores) {
        const double e = std::exp(s - mx);
        out[cls] = e;
        z += e;
    }
    for (auto& [cls, p] : out) p /= z;
    return out;
}

MlmEvalReport mlm_eval(const EncoderModel& model, std::span<const MaskedBatch> batches) {
    Tape tape;
    const StagedModel sm = stage(tape, model, false);
    const size_t watermark = tape.size();

    std::int64_t correct = 0, total = 0;
    double nll = 0.0;
    for (const MaskedBatch& batch : batches) {
        for (size_t k = 0; k < batch.rows.size(); ++k) {
            if (batch.masks[k].empty()) continue;
            const EncoderOutput out = encode(tape, sm, batch.sequence(static_cast<int>(k)));
            const Tensor& lp = tape.value(out.log_probs);
            for (const MaskEntry& m : batch.masks[k]) {
                int best = 0;
                float best_lp = lp.at(0, m.position);
                for (int w = 1; w < lp.rows(); ++w)
                    if (lp.at(w, m.position) > best_lp) {
                        best_lp = lp.at(w, m.position);
                        best = w;
                    }
                if (best == m.token_id) ++correct;
                nll -= static_cast<double>(lp.at(m.token_id, m.position));
                ++total;
            }
            tape.truncate(watermark);
        }
    }
    if (total == 0) throw ValueError("mlm_eval: no masked positions in the given batches");
    MlmEvalReport r;
    r.accuracy = static_cast<double>(correct) / static_cast<double>(total);
    r.perplexity = std::exp(nll / static_cast<double>(total));
    r.masked_count = static_cast<int>(total);
    return r;
}

AgreementReport agreement_eval(const EncoderModel& student, const EncoderModel& teacher,
                               std::span<const MaskedBatch> batches) {
    Tape s_tape, t_tape;
    const StagedModel s_staged = stage(s_tape, student, false);
    const StagedModel t_staged = stage(t_tape, teacher, false);
    const size_t s_mark = s_tape.size(), t_mark = t_tape.size();

    double cos_sum = 0.0, kl_sum = 0.0;
    std::int64_t tokens = 0;
    for (const MaskedBatch& batch : batches) {
        for (size_t k = 0; k < batch.rows.size(); ++k) {
            const auto seq = batch.sequence(static_cast<int>(k));
            const EncoderOutput so = encode(s_tape, s_staged, seq);
            const EncoderOutput to = encode(t_tape, t_staged, seq);
            const Tensor& sh = s_tape.value(so.hidden);
            const Tensor& th = t_tape.value(to.hidden);
            const Tensor& slp = s_tape.value(so.log_probs);
            const Tensor& tlp = t_tape.value(to.log_probs);
            const int n = sh.cols(), d = sh.rows(), v = slp.rows();
            for (int i = 0; i < n; ++i) {
                double dot = 0.0, ns = 0.0, nt = 0.0;
                for (int r = 0; r < d; ++r) {
                    dot += static_cast<double>(sh.at(r, i)) * th.at(r, i);
                    ns += static_cast<double>(sh.at(r, i)) * sh.at(r, i);
                    nt += static_cast<double>(th.at(r, i)) * th.at(r, i);
                }
                if (ns > 0.0 && nt > 0.0) cos_sum += dot / (std::sqrt(ns) * std::sqrt(nt));
                double kl = 0.0;
                for (int w = 0; w < v; ++w) {
                    const double ls = slp.at(w, i);
                    kl += std::exp(ls) * (ls - static_cast<double>(tlp.at(w, i)));
                }
                kl_sum += std::max(kl, 0.0);
                ++tokens;
            }
            s_tape.truncate(s_mark);
            t_tape.truncate(t_mark);
        }
    }
    if (tokens == 0) throw ValueError("agreement_eval: no tokens");
    return AgreementReport{cos_sum / static_cast<double>(tokens),
                           kl_sum / static_cast<double>(tokens), static_cast<int>(tokens)};
}

std::int64_t layer_stack_flops(const ModelConfig& cfg, int seq_len) {
    const std::int64_t d = cfg.hidden, e = cfg.ff, n = seq_len;
    return cfg.layers * (8 * d * d * n + 4 * d * n * n + 4 * d * e * n);
}

namespace {

struct Timing {
    double mean = 0.0;
    double median = 0.0;
};

Timing time_forwards(const EncoderModel& model, const std::vector<std::vector<int>>& inputs,
                     int iters) {
    Tape tape;
    const StagedModel sm = stage(tape, model, false);
    const size_t mark = tape.size();
    auto pass = [&] {
        for (const auto& seq : inputs) {
            encode(tape, sm, seq);
            tape.truncate(mark);
        }
    };
    for (int i = 0; i < 3; ++i) pass();  // warmup, discarded

    std::vector<double> secs(static_cast<size_t>(iters));
    for (int i = 0; i < iters; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        pass();
        const auto t1 = std::chrono::steady_clock::now();
        secs[static_cast<size_t>(i)] = std::chrono::duration<double>(t1 - t0).count();
    }
    Timing t;
    for (double s : secs) t.mean += s;
    t.mean /= iters;
    std::sort(secs.begin(), secs.end());
    t.median = iters % 2 ? secs[static_cast<size_t>(iters) / 2]
                         : 0.5 * (secs[static_cast<size_t>(iters) / 2 - 1] +
                                  secs[static_cast<size_t>(iters) / 2]);
    return t;
}

}  // namespace

BenchReport bench(const EncoderModel& teacher, const EncoderModel& student, int seq_len,
                  int batch, int iters, std::uint64_t seed) {
    if (iters < 10) throw ConfigError("bench iters must be >= 10");
    if (batch < 1) throw ConfigError("bench batch must be >= 1");
    if (seq_len < 1 || seq_len > teacher.config.max_sequence() ||
        seq_len > student.config.max_sequence())
        throw ConfigError("bench seq_len must fit both models' position tables");

    BenchReport r;
    if (teacher.config.hidden != student.config.hidden)
        r.warning = "hidden sizes differ; the flop ratio does not isolate depth";

    const int vocab = std::min(teacher.config.vocab, student.config.vocab);
    if (vocab <= Vocabulary::kReserved)
        throw ConfigError("bench needs a vocabulary beyond the reserved ids");
    SplitMix64 rng(seed);
    std::vector<std::vector<int>> inputs(static_cast<size_t>(batch));
    for (auto& seq : inputs) {
        seq.resize(static_cast<size_t>(seq_len));
        for (int& id : seq)
            id = Vocabulary::kReserved +
                 static_cast<int>(rng.next_below(
                     static_cast<std::uint64_t>(vocab - Vocabulary::kReserved)));
    }

    const Timing tt = time_forwards(teacher, inputs, iters);
    const Timing ts = time_forwards(student, inputs, iters);
    r.teacher_mean_s = tt.mean;
    r.teacher_median_s = tt.median;
    r.student_mean_s = ts.mean;
    r.student_median_s = ts.median;
    r.speedup = tt.median / ts.median;
    r.teacher_flops = layer_stack_flops(teacher.config, seq_len) * batch;
    r.student_flops = layer_stack_flops(student.config, seq_len) * batch;
    r.flop_ratio = static_cast<double>(r.teacher_flops) / static_cast<double>(r.student_flops);
    return r;
}

}  // namespace distenc
