#include "distenc/distill.hpp"

#include "distenc/errors.hpp"

namespace distenc {

void DistillConfig::validate() const {
    if (alpha < 0.f || beta < 0.f || gamma < 0.f)
        throw ConfigError("loss weights must be nonnegative");
    if (copy_stride < 1) throw ConfigError("copy_stride must be >= 1");
    if (temperature <= 0.f) throw ConfigError("temperature must be positive");
}

EncoderModel init_student(const EncoderModel& teacher, const ModelConfig& student_config,
                          int copy_stride) {
    student_config.validate();
    if (copy_stride < 1) throw ConfigError("copy_stride must be >= 1");
    if (!teacher.config.same_shape_except_layers(student_config))
        throw ConfigError("student must match the teacher in every extent except layers");
    if (copy_stride * student_config.layers > teacher.config.layers)
        throw ConfigError("copy_stride " + std::to_string(copy_stride) + " x " +
                          std::to_string(student_config.layers) +
                          " student layers does not fit in " +
                          std::to_string(teacher.config.layers) + " teacher layers");

    EncoderModel s(student_config);
    s.word_embedding = teacher.word_embedding;
    s.positional_embedding = teacher.positional_embedding;
    s.embedding_gain = teacher.embedding_gain;
    s.embedding_bias = teacher.embedding_bias;
    s.lm_head_bias = teacher.lm_head_bias;
    for (int i = 0; i < student_config.layers; ++i)
        s.layers[static_cast<size_t>(i)] =
            teacher.layers[static_cast<size_t>(copy_stride * i)];
    return s;
}

namespace {

void require_matching(std::span<const Var> a, std::span<const Var> b, const char* what) {
    if (a.size() != b.size())
        throw ShapeError(std::string(what) + ": student has " + std::to_string(a.size()) +
                         " sequences, teacher " + std::to_string(b.size()));
    if (a.empty()) throw ValueError(std::string(what) + ": no sequences");
}

}  // namespace

Var soft_label_loss(Tape& tape, std::span<const Var> student_log_probs,
                    std::span<const Var> teacher_log_probs, float temperature,
                    bool reverse_kl) {
    require_matching(student_log_probs, teacher_log_probs, "soft_label_loss");
    int total_tokens = 0;
    Var sum{-1};
    for (size_t k = 0; k < student_log_probs.size(); ++k) {
        Var s_lp = student_log_probs[k];
        Var t_lp = teacher_log_probs[k];
        if (tape.value(s_lp).shape != tape.value(t_lp).shape)
            throw ShapeError("soft_label_loss: sequence " + std::to_string(k) +
                             " shapes disagree");
        if (temperature != 1.f) {
            s_lp = tape.log_softmax_columns(tape.scale(s_lp, 1.f / temperature));
            t_lp = tape.log_softmax_columns(tape.scale(t_lp, 1.f / temperature));
        }
        const Var p_s = tape.exp(s_lp);
        const Var p_t = tape.exp(t_lp);
        const Var kl = reverse_kl ? tape.kl_div(p_t, p_s) : tape.kl_div(p_s, p_t);
        sum = k == 0 ? kl : tape.add(sum, kl);
        total_tokens += tape.value(s_lp).cols();
    }
    return tape.scale(sum, 1.f / static_cast<float>(total_tokens));
}

Var cosine_loss(Tape& tape, std::span<const Var> student_hidden,
                std::span<const Var> teacher_hidden, bool raw) {
    require_matching(student_hidden, teacher_hidden, "cosine_loss");
    int total_tokens = 0;
    Var sim_sum{-1};
    bool first = true;
    for (size_t k = 0; k < student_hidden.size(); ++k) {
        // Copy the extents out before pushing new nodes: tape.value() hands
        // back a reference into the tape's own storage, which reallocates.
        const Shape hs_shape = tape.value(student_hidden[k]).shape;
        const Shape ht_shape = tape.value(teacher_hidden[k]).shape;
        if (hs_shape != ht_shape)
            throw ShapeError("cosine_loss: sequence " + std::to_string(k) + " shapes disagree");
        const int n_cols = hs_shape.cols();
        for (int i = 0; i < n_cols; ++i) {
            const Var c = tape.cosine_sim(tape.col(student_hidden[k], i),
                                          tape.col(teacher_hidden[k], i));
            sim_sum = first ? c : tape.add(sim_sum, c);
            first = false;
        }
        total_tokens += n_cols;
    }
    const float inv = 1.f / static_cast<float>(total_tokens);
    if (raw) return tape.scale(sim_sum, inv);
    // mean(1 - cos) = 1 - mean(cos)
    const Var one = tape.constant_scalar(1.f);
    return tape.add(one, tape.scale(sim_sum, -inv));
}

Var mlm_loss(Tape& tape, std::span<const Var> student_log_probs, const MaskedBatch& batch) {
    if (student_log_probs.size() != batch.rows.size())
        throw ShapeError("mlm_loss: " + std::to_string(student_log_probs.size()) +
                         " sequences vs batch of " + std::to_string(batch.rows.size()));
    const int masked = batch.total_masked();
    if (masked == 0) throw ValueError("mlm_loss: batch has no masked positions");

    Var sum{-1};
    bool first = true;
    for (size_t k = 0; k < student_log_probs.size(); ++k) {
        if (batch.masks[k].empty()) continue;
        const Var nll = tape.cross_entropy(student_log_probs[k], batch.masks[k]);
        sum = first ? nll : tape.add(sum, nll);
        first = false;
    }
    return tape.scale(sum, 1.f / static_cast<float>(masked));
}

DistillLoss distill_loss(Tape& tape, std::span<const EncoderOutput> student,
                         std::span<const EncoderOutput> teacher, const MaskedBatch& batch,
                         const DistillConfig& config) {
    config.validate();
    if (student.size() != teacher.size() || student.empty())
        throw ShapeError("distill_loss: student/teacher sequence counts disagree or are empty");

    std::vector<Var> s_lp, t_lp, s_h, t_h;
    for (const EncoderOutput& o : student) {
        s_lp.push_back(o.log_probs);
        s_h.push_back(o.hidden);
    }
    for (const EncoderOutput& o : teacher) {
        t_lp.push_back(o.log_probs);
        t_h.push_back(o.hidden);
    }

    DistillLoss out;
    const Var soft = soft_label_loss(tape, s_lp, t_lp, config.temperature, config.reverse_kl);
    const Var cos = cosine_loss(tape, s_h, t_h, config.raw_cosine);
    const bool want_mlm = batch.total_masked() > 0 || config.gamma > 0.f;
    const Var mlm = want_mlm ? mlm_loss(tape, s_lp, batch) : tape.constant_scalar(0.f);

    Var total = tape.add(tape.scale(soft, config.alpha), tape.scale(cos, config.beta));
    total = tape.add(total, tape.scale(mlm, config.gamma));

    out.breakdown.soft_label = tape.value(soft).data[0];
    out.breakdown.cosine = tape.value(cos).data[0];
    out.breakdown.mlm = tape.value(mlm).data[0];
    out.breakdown.total = tape.value(total).data[0];
    out.breakdown.token_count = 0;
    for (const EncoderOutput& o : student) out.breakdown.token_count += tape.value(o.hidden).cols();
    out.breakdown.masked_count = batch.total_masked();
    out.root = total;
    return out;
}

}  // namespace distenc
