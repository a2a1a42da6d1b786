#include <cmath>
#include <numeric>
#include <vector>

#include "distenc/encoder.hpp"
#include "distenc/errors.hpp"
#include "doctest.h"
#include "support/fd_cases.hpp"
#include "support/fd_check.hpp"

using namespace distenc;

namespace {

EncoderModel from_flat(const ModelConfig& cfg, const std::vector<float>& x) {
    EncoderModel m(cfg);
    size_t off = 0;
    for (auto& [name, t] : m.named_tensors()) {
        std::copy(x.begin() + off, x.begin() + off + t->data.size(), t->data.begin());
        off += t->data.size();
    }
    REQUIRE(off == x.size());
    return m;
}

std::vector<float> to_flat(const EncoderModel& m) {
    std::vector<float> x;
    for (const auto& [name, t] : m.named_tensors()) x.insert(x.end(), t->data.begin(), t->data.end());
    return x;
}

}  // namespace

// ---- parameter counting ----

TEST_CASE("closed-form parameter count reproduces the reference architectures") {
    CHECK(param_count({12, 768, 12, 3072, 32005, 514}) == 110030592);
    CHECK(param_count({6, 768, 12, 3072, 32005, 514}) == 67503360);
}

TEST_CASE("audited count over stored tensors equals the formula exactly") {
    const ModelConfig configs[] = {
        {12, 768, 12, 3072, 32005, 514}, {6, 768, 12, 3072, 32005, 514},
        {0, 16, 1, 4, 20, 8},            {1, 8, 2, 16, 11, 16},
        {2, 8, 2, 16, 11, 16},           {4, 64, 4, 128, 512, 34},
        {3, 12, 3, 7, 33, 9},
    };
    for (const ModelConfig& cfg : configs) {
        const EncoderModel m(cfg);
        CHECK(m.audited_param_count() == param_count(cfg));
    }
}

TEST_CASE("a depth-zero model counts only embeddings and their norm") {
    const ModelConfig cfg{0, 16, 1, 4, 20, 8};
    CHECK(param_count(cfg) == 16 * (20 + 8 + 2));
}

TEST_CASE("config validation rejects inconsistent extents") {
    CHECK_THROWS_AS(ModelConfig({1, 10, 3, 4, 5, 6}).validate(), ConfigError);  // 10 % 3
    CHECK_THROWS_AS(ModelConfig({-1, 8, 2, 4, 5, 6}).validate(), ConfigError);
    CHECK_THROWS_AS(ModelConfig({1, 8, 2, 4, 5, 2}).validate(), ConfigError);  // no free positions
    CHECK_THROWS_AS(ModelConfig({1, 0, 1, 4, 5, 6}).validate(), ConfigError);
    ModelConfig bad_eps{1, 8, 2, 4, 5, 6};
    bad_eps.layer_norm_eps = 0.f;
    CHECK_THROWS_AS(bad_eps.validate(), ConfigError);
    CHECK(ModelConfig{1, 8, 2, 4, 5, 6}.max_sequence() == 4);
}

TEST_CASE("random init randomizes matrices only and is seed-deterministic") {
    const ModelConfig cfg{2, 8, 2, 16, 11, 16};
    const EncoderModel a = EncoderModel::init_random(cfg, 99, 0.5f);
    const EncoderModel b = EncoderModel::init_random(cfg, 99, 0.5f);
    const EncoderModel c = EncoderModel::init_random(cfg, 100, 0.5f);
    CHECK(to_flat(a) == to_flat(b));
    CHECK(to_flat(a) != to_flat(c));
    for (const auto& [name, t] : a.named_tensors()) {
        if (t->shape.rank() == 2) {
            for (float v : t->data) {
                CHECK(v >= -0.5f);
                CHECK(v < 0.5f);
            }
        } else if (name.find("gain") != std::string::npos) {
            for (float v : t->data) CHECK(v == 1.f);
        } else {
            for (float v : t->data) CHECK(v == 0.f);
        }
    }
}

// ---- attention and feed-forward oracles ----

namespace {

// One-layer shell whose weights the test sets directly.
EncoderModel shell_2d() {
    EncoderModel m(ModelConfig{1, 2, 1, 2, 5, 6});
    auto& l = m.layers[0];
    l.wq.data = {1, 0, 0, 1};
    l.wk.data = {1, 0, 0, 1};
    l.wv.data = {1, 2, 3, 4};
    l.wout.data = {1, 0, 0, 1};
    return m;
}

}  // namespace

TEST_CASE("single-head attention reproduces the hand-worked example") {
    // h = I, q = k = h, v = [[1,2],[3,4]]. scores = I/sqrt(2), so each softmax
    // column puts e^(1/sqrt 2) / (e^(1/sqrt 2) + 1) on its own key.
    EncoderModel m = shell_2d();
    Tape t;
    StagedModel sm = stage(t, m, false);
    Tensor h(Shape::mat(2, 2));
    h.data = {1, 0, 0, 1};
    const HeadAttention ha = head_attention(t, m.config, sm.layers[0], t.constant(h), 0);

    const double diag = 0.6697615493266569, off = 0.3302384506733431;
    const Tensor& w = t.value(ha.weights);
    CHECK(w.at(0, 0) == doctest::Approx(diag).epsilon(1e-6));
    CHECK(w.at(1, 0) == doctest::Approx(off).epsilon(1e-6));
    CHECK(w.at(0, 1) == doctest::Approx(off).epsilon(1e-6));
    CHECK(w.at(1, 1) == doctest::Approx(diag).epsilon(1e-6));

    const Tensor& out = t.value(ha.out);
    CHECK(out.at(0, 0) == doctest::Approx(1.3302384506733431).epsilon(1e-6));
    CHECK(out.at(0, 1) == doctest::Approx(1.6697615493266569).epsilon(1e-6));
    CHECK(out.at(1, 0) == doctest::Approx(3.330238450673343).epsilon(1e-6));
    CHECK(out.at(1, 1) == doctest::Approx(3.669761549326657).epsilon(1e-6));

    // Identity output projection: multi_head over the single head matches.
    const Tensor& mh = t.value(multi_head(t, m.config, sm.layers[0], t.constant(h)));
    for (size_t i = 0; i < 4; ++i) CHECK(mh.data[i] == doctest::Approx(out.data[i]).epsilon(1e-6));

    CHECK_THROWS_AS(head_attention(t, m.config, sm.layers[0], t.constant(h), 1), ValueError);
}

TEST_CASE("attention weights are column-stochastic for a random model") {
    const ModelConfig cfg{1, 8, 2, 16, 11, 16};
    EncoderModel m = EncoderModel::init_random(cfg, 3, 0.5f);
    Tape t;
    StagedModel sm = stage(t, m, false);
    SplitMix64 rng(17);
    Tensor h(Shape::mat(8, 5));
    for (float& v : h.data) v = rng.next_uniform(-1.f, 1.f);
    for (int head = 0; head < 2; ++head) {
        const HeadAttention ha = head_attention(t, cfg, sm.layers[0], t.constant(h), head);
        const Tensor& w = t.value(ha.weights);
        REQUIRE(w.shape == Shape::mat(5, 5));
        for (int j = 0; j < 5; ++j) {
            double col = 0;
            for (int i = 0; i < 5; ++i) {
                CHECK(w.at(i, j) >= 0.f);
                col += w.at(i, j);
            }
            CHECK(col == doctest::Approx(1.0).epsilon(1e-5));
        }
    }
}

TEST_CASE("feed-forward applies expansion, gate, and contraction as written") {
    EncoderModel m = shell_2d();
    auto& l = m.layers[0];
    l.feed_w.data = {1, -1, 2, 1};
    l.feed_b.data = {-0.5f, -3.f};
    l.fwd_w.data = {1, 1, -1, 2};
    l.fwd_b.data = {0.5f, -1.f};
    Tape t;
    StagedModel sm = stage(t, m, false);
    Tensor h(Shape::mat(2, 1));
    h.data = {1.f, 0.25f};  // inner pre-activations: (0.25, -0.75), gate kills the second
    const Tensor& y = t.value(feed_forward(t, sm.layers[0], t.constant(h)));
    CHECK(y.at(0, 0) == doctest::Approx(0.75).epsilon(1e-6));
    CHECK(y.at(1, 0) == doctest::Approx(-1.25).epsilon(1e-6));
}

// ---- full forward pass ----

TEST_CASE("an all-zero model emits zero hidden states and a uniform vocabulary") {
    const ModelConfig cfg{2, 4, 2, 8, 7, 10};
    EncoderModel m(cfg);
    Tape t;
    StagedModel sm = stage(t, m, false);
    const std::vector<int> ids = {0, 4, 6, 2};
    const EncoderOutput out = encode(t, sm, ids);
    CHECK(t.value(out.hidden).shape == Shape::mat(4, 4));
    CHECK(t.value(out.log_probs).shape == Shape::mat(7, 4));
    for (float v : t.value(out.hidden).data) CHECK(v == 0.f);
    const float uniform = -std::log(7.f);
    for (float v : t.value(out.log_probs).data)
        CHECK(v == doctest::Approx(uniform).epsilon(1e-6));
}

TEST_CASE("log-prob columns exponentiate to unit mass") {
    const ModelConfig cfg{2, 8, 2, 16, 11, 16};
    EncoderModel m = EncoderModel::init_random(cfg, 5, 0.5f);
    Tape t;
    StagedModel sm = stage(t, m, false);
    const std::vector<int> ids = {0, 4, 7, 10, 3};
    const Tensor& lp = t.value(encode(t, sm, ids).log_probs);
    for (int j = 0; j < 5; ++j) {
        double mass = 0;
        for (int i = 0; i < 11; ++i) mass += std::exp(static_cast<double>(lp.at(i, j)));
        CHECK(mass == doctest::Approx(1.0).epsilon(1e-5));
    }
}

TEST_CASE("the head is tied: logits come from the word-embedding rows") {
    const ModelConfig cfg{1, 8, 2, 16, 11, 16};
    EncoderModel m = EncoderModel::init_random(cfg, 21, 0.5f);
    SplitMix64 rng(22);
    for (float& v : m.lm_head_bias.data) v = rng.next_uniform(-0.5f, 0.5f);
    Tape t;
    StagedModel sm = stage(t, m, false);
    const std::vector<int> ids = {0, 5, 9};
    const EncoderOutput out = encode(t, sm, ids);
    const Tensor& hid = t.value(out.hidden);
    const Tensor& lp = t.value(out.log_probs);
    // Recompute column 1's logits by hand and push through log-softmax.
    std::vector<double> logits(11);
    double mx = -1e300;
    for (int w = 0; w < 11; ++w) {
        double s = static_cast<double>(m.lm_head_bias.data[static_cast<size_t>(w)]);
        for (int r = 0; r < 8; ++r) s += static_cast<double>(m.word_embedding.at(w, r)) * hid.at(r, 1);
        logits[static_cast<size_t>(w)] = s;
        mx = std::max(mx, s);
    }
    double z = 0;
    for (double s : logits) z += std::exp(s - mx);
    const double lz = std::log(z);
    for (int w = 0; w < 11; ++w)
        CHECK(lp.at(w, 1) == doctest::Approx(logits[static_cast<size_t>(w)] - mx - lz).epsilon(1e-4));
}

TEST_CASE("encode rejects empty, overlong, and out-of-vocabulary input") {
    const ModelConfig cfg{1, 8, 2, 16, 11, 6};  // max sequence 4
    EncoderModel m(cfg);
    Tape t;
    StagedModel sm = stage(t, m, false);
    CHECK_THROWS_AS(encode(t, sm, std::vector<int>{}), ValueError);
    CHECK_THROWS_AS(encode(t, sm, std::vector<int>{0, 1, 2, 3, 4}), ValueError);
    CHECK_THROWS_AS(encode(t, sm, std::vector<int>{0, 11}), ValueError);
    CHECK_NOTHROW(encode(t, sm, std::vector<int>{0, 1, 2, 3}));
}

TEST_CASE("staging follows the canonical tensor order") {
    const ModelConfig cfg{2, 8, 2, 16, 11, 16};
    EncoderModel m = EncoderModel::init_random(cfg, 9, 0.5f);
    Tape t;
    StagedModel sm = stage(t, m, true);
    auto named = m.named_tensors();
    REQUIRE(sm.flat.size() == named.size());
    for (size_t i = 0; i < named.size(); ++i)
        CHECK(t.value(sm.flat[i]).data == named[i].second->data);
}

// ---- gradients through composed blocks ----

TEST_CASE("gradients match central differences through one attention block") {
    const ModelConfig cfg{1, 4, 2, 8, 7, 10};
    SplitMix64 seq(12);
    Tensor hin(Shape::mat(4, 3));
    for (float& v : hin.data) v = seq.next_uniform(-1.f, 1.f);
    for (int s = 0; s < 5; ++s) {
        EncoderModel m = EncoderModel::init_random(cfg, 200 + static_cast<uint64_t>(s), 0.5f);
        // Probe only the first layer's attention tensors (wq..bout): 4d^2+4d.
        std::vector<float> x;
        auto named = m.named_tensors();
        for (size_t i = 4; i < 12; ++i)
            x.insert(x.end(), named[i].second->data.begin(), named[i].second->data.end());
        fdcheck::Builder b = [&cfg, &m, &hin, s](Tape& t, const std::vector<float>& p) {
            EncoderModel probe = m;
            size_t off = 0;
            auto pn = probe.named_tensors();
            for (size_t i = 4; i < 12; ++i) {
                std::copy(p.begin() + off, p.begin() + off + pn[i].second->data.size(),
                          pn[i].second->data.begin());
                off += pn[i].second->data.size();
            }
            StagedModel sm = stage(t, probe, true);
            std::vector<Var> leaves(sm.flat.begin() + 4, sm.flat.begin() + 12);
            Var y = multi_head(t, cfg, sm.layers[0], t.constant(hin));
            return fdcheck::Built{
                fdcheck::shifted_loss(t, y, leaves, 700 + static_cast<uint64_t>(s)), leaves};
        };
        const fdcheck::FdSummary fd = fdcheck::fd_compare(b, x, 5e-4, 1e-2);
        CHECK_MESSAGE(fd.ok(), "seed ", s, ": ", fd.first_failure);
    }
}

TEST_CASE("gradients match central differences through the gated feed-forward") {
    // Pre-activations are pinned at least 0.2 from the gate threshold so the
    // probe window never crosses it; both open and closed units occur.
    for (int s = 0; s < 5; ++s) {
        SplitMix64 rng(60000 + static_cast<uint64_t>(s));
        const int d = 6, e = 10, n = 4;
        std::vector<float> x;
        for (int i = 0; i < e * d; ++i) x.push_back(rng.next_uniform(-0.1f, 0.1f));
        for (int i = 0; i < e; ++i) x.push_back(rng.next_unit() < 0.5 ? -0.6f : 0.6f);
        for (int i = 0; i < d * e; ++i) x.push_back(rng.next_uniform(-0.5f, 0.5f));
        for (int i = 0; i < d; ++i) x.push_back(rng.next_uniform(-0.5f, 0.5f));
        Tensor hin(Shape::mat(d, n));
        for (float& v : hin.data) v = rng.next_uniform(-1.f, 1.f);

        fdcheck::Builder b = [=](Tape& t, const std::vector<float>& p) {
            size_t off = 0;
            auto take = [&](Shape shape) {
                Tensor ten(shape);
                std::copy(p.begin() + static_cast<long>(off),
                          p.begin() + static_cast<long>(off + ten.data.size()), ten.data.begin());
                off += ten.data.size();
                return t.leaf(std::move(ten), true);
            };
            Var fw = take(Shape::mat(e, d)), fb = take(Shape::vec(e));
            Var ww = take(Shape::mat(d, e)), wb = take(Shape::vec(d));
            const std::vector<Var> leaves = {fw, fb, ww, wb};
            Var inner = t.relu(t.add_bias(t.matmul(fw, t.constant(hin)), fb));
            Var y = t.add_bias(t.matmul(ww, inner), wb);
            return fdcheck::Built{
                fdcheck::shifted_loss(t, y, leaves, 800 + static_cast<uint64_t>(s)), leaves};
        };
        const fdcheck::FdSummary fd = fdcheck::fd_compare(b, x, 2e-4, 1e-2);
        CHECK_MESSAGE(fd.ok(), "seed ", s, ": ", fd.first_failure);
    }
}

TEST_CASE("full-model gradient matches directional central differences") {
    // Shared with the acceptance gate (support/fd_cases.hpp): feed biases
    // start at +3 so every gate stays open with margin across the probe
    // window, making the loss smooth there. Gate masking itself is covered by
    // the primitive relu case and the feed-forward composite above.
    const fdcheck::FdSummary fd = fdcases::run_full_model(5, 1e-3, 3e-3);
    CHECK_MESSAGE(fd.ok(), fd.first_failure);
    CHECK_MESSAGE(fd.worst_rel < 1e-3, "worst rel ", fd.worst_rel);
}
