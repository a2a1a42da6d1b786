#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "distenc/config_io.hpp"
#include "distenc/corpus.hpp"
#include "distenc/digest.hpp"
#include "distenc/distill.hpp"
#include "distenc/encoder.hpp"
#include "distenc/errors.hpp"
#include "distenc/evaluation.hpp"
#include "distenc/rng.hpp"
#include "distenc/training.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace distenc;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string hex64(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(v));
    return buf;
}

json file_record(const std::string& path) {
    std::string bytes = read_text_file(path);
    return {{"path", path}, {"fnv1a64", hex64(fnv1a64(bytes))}};
}

// Artifact paths derived from --out: the checkpoint itself plus sidecars.
struct Artifacts {
    std::string checkpoint, vocab, losslog, manifest;
};

Artifacts artifacts_for(const std::string& out) {
    return {out, out + ".vocab", out + ".losslog.tsv", out + ".manifest.json"};
}

void check_collisions(const Artifacts& art, bool force) {
    if (force) return;
    for (const std::string& p : {art.checkpoint, art.vocab, art.losslog, art.manifest})
        if (fs::exists(p))
            throw IoError("output " + p + " already exists; pass --force to overwrite");
}

std::string vocab_file_text(const Vocabulary& vocab) {
    std::string text;
    for (const std::string& t : vocab.tokens()) {
        text += t;
        text += '\n';
    }
    return text;
}

// Vocabulary stored in the checkpoint wins; otherwise rebuild from the corpus
// the same way training would.
Vocabulary vocab_for(const Checkpoint& ckpt, const std::string& corpus_text) {
    if (!ckpt.vocab_tokens.empty()) return Vocabulary::from_tokens(ckpt.vocab_tokens);
    return Vocabulary::build(corpus_text, ckpt.model.config.vocab);
}

TrainingMeta meta_for(const TrainResult& result, int steps, std::uint64_t seed) {
    TrainingMeta meta;
    meta.step = steps;
    meta.seed = seed;
    std::size_t first = result.log.size() > 16 ? result.log.size() - 16 : 0;
    for (std::size_t i = first; i < result.log.size(); ++i)
        meta.loss_tail.push_back(result.log[i].total);
    return meta;
}

// Run manifest: what was run, on what inputs (content-digested), producing
// which files. wall_seconds is diagnostic and varies between reruns; the
// checkpoint, vocab, and loss log are the deterministic artifacts.
void write_manifest(const Artifacts& art, const std::string& command, const RunConfig& cfg,
                    std::uint64_t seed, int steps, const json& inputs, double wall_seconds) {
    json j;
    j["command"] = command;
    j["config"] = json::parse(run_config_to_json(cfg));
    j["seed"] = seed;
    j["steps"] = steps;
    j["inputs"] = inputs;
    j["outputs"] = {art.checkpoint, art.vocab, art.losslog};
    j["wall_seconds"] = wall_seconds;
    write_text_file(art.manifest, j.dump(2) + "\n");
}

void stream_record(const LossRecord& r) {
    std::fputs(format_loss_record(r).c_str(), stdout);
    std::fflush(stdout);
}

void save_run(const Artifacts& art, const TrainResult& result, const Vocabulary& vocab,
              int steps, std::uint64_t seed) {
    save_checkpoint(result.model, meta_for(result, steps, seed), vocab.tokens(), art.checkpoint);
    write_text_file(art.vocab, vocab_file_text(vocab));
    write_text_file(art.losslog, format_loss_log(result.log));
}

int cmd_params(const std::string& config_path) {
    RunConfig cfg = load_run_config(config_path);
    const ModelConfig& m = cfg.model;
    EncoderModel model(m);
    std::printf("layers: %d\n", m.layers);
    std::printf("hidden: %d\n", m.hidden);
    std::printf("heads: %d\n", m.heads);
    std::printf("ff: %d\n", m.ff);
    std::printf("vocab: %d\n", m.vocab);
    std::printf("positions: %d\n", m.positions);
    std::printf("formula_params: %lld\n", static_cast<long long>(param_count(m)));
    std::printf("audited_params: %lld\n", static_cast<long long>(model.audited_param_count()));
    std::printf("lm_head_extra: %d\n", m.vocab);
    return 0;
}

int cmd_train_teacher(const std::string& config_path, const std::string& corpus_path,
                      const std::string& out, int steps, std::uint64_t seed, bool seed_set,
                      bool force) {
    Clock::time_point t0 = Clock::now();
    RunConfig cfg = load_run_config(config_path);
    if (!seed_set) seed = cfg.seed;
    std::string corpus = read_text_file(corpus_path);
    Artifacts art = artifacts_for(out);
    check_collisions(art, force);

    Vocabulary vocab = Vocabulary::build(corpus, cfg.model.vocab);
    std::printf("vocab_size: %d\n", vocab.size());
    std::printf("seed: %llu\n", static_cast<unsigned long long>(seed));
    TrainResult result = train_teacher(cfg.model, corpus, vocab, steps, seed, cfg.optimizer,
                                       cfg.data, stream_record);

    save_run(art, result, vocab, steps, seed);
    json inputs = {{"config", file_record(config_path)}, {"corpus", file_record(corpus_path)}};
    write_manifest(art, "train-teacher", cfg, seed, steps, inputs, seconds_since(t0));
    std::printf("final_loss: %.9g\n", static_cast<double>(result.log.back().total));
    std::printf("checkpoint: %s\n", art.checkpoint.c_str());
    return 0;
}

int cmd_distill(const std::string& teacher_path, const std::string& config_path,
                const std::string& corpus_path, const std::string& out, int steps,
                std::uint64_t seed, bool seed_set, bool force) {
    Clock::time_point t0 = Clock::now();
    RunConfig cfg = load_run_config(config_path);  // model section = the student
    if (!seed_set) seed = cfg.seed;
    std::string corpus = read_text_file(corpus_path);
    Artifacts art = artifacts_for(out);
    check_collisions(art, force);

    Checkpoint teacher = load_checkpoint(teacher_path);
    Vocabulary vocab = vocab_for(teacher, corpus);
    std::printf("teacher_layers: %d\n", teacher.model.config.layers);
    std::printf("student_layers: %d\n", cfg.model.layers);
    std::printf("seed: %llu\n", static_cast<unsigned long long>(seed));
    TrainResult result = distill(teacher.model, cfg.model, corpus, vocab, steps, seed,
                                 cfg.distill, cfg.optimizer, cfg.data, stream_record);

    save_run(art, result, vocab, steps, seed);
    json inputs = {{"config", file_record(config_path)},
                   {"corpus", file_record(corpus_path)},
                   {"teacher", file_record(teacher_path)}};
    write_manifest(art, "distill", cfg, seed, steps, inputs, seconds_since(t0));
    std::printf("final_loss: %.9g\n", static_cast<double>(result.log.back().total));
    std::printf("checkpoint: %s\n", art.checkpoint.c_str());
    return 0;
}

int cmd_eval_mlm(const std::string& model_path, const std::string& corpus_path,
                 std::uint64_t seed, int batch, int n_max, float mask_rate) {
    Checkpoint ckpt = load_checkpoint(model_path);
    std::string corpus = read_text_file(corpus_path);
    Vocabulary vocab = vocab_for(ckpt, corpus);
    if (n_max <= 0) n_max = std::min(64, ckpt.model.config.max_sequence());

    std::vector<MaskedBatch> batches = make_batches(corpus, vocab, batch, n_max,
                                                    derive_seed(seed, 1));
    std::vector<MaskedBatch> masked;
    for (std::size_t i = 0; i < batches.size(); ++i) {
        MaskedBatch mb = apply_masking(batches[i], mask_rate, derive_seed(seed, 1000 + i),
                                       vocab.size());
        if (mb.total_masked() > 0) masked.push_back(std::move(mb));
    }
    if (masked.empty()) throw ValueError("nothing was masked; the corpus is too small to evaluate");

    MlmEvalReport rep = mlm_eval(ckpt.model, masked);
    std::printf("masked_count: %d\n", rep.masked_count);
    std::printf("accuracy: %.9g\n", rep.accuracy);
    std::printf("perplexity: %.9g\n", rep.perplexity);
    return 0;
}

int cmd_bench(const std::string& config_path, int student_layers, int seq_len, int batch,
              int iters, std::uint64_t seed, bool analytic_only) {
    RunConfig cfg = load_run_config(config_path);
    ModelConfig tc = cfg.model;
    ModelConfig sc = tc;
    sc.layers = student_layers > 0 ? student_layers : tc.layers / 2;
    sc.validate();
    if (seq_len < 1) throw ConfigError("seq-len must be >= 1");
    std::printf("teacher_layers: %d\n", tc.layers);
    std::printf("student_layers: %d\n", sc.layers);

    if (analytic_only) {
        std::int64_t tf = layer_stack_flops(tc, seq_len) * batch;
        std::int64_t sf = layer_stack_flops(sc, seq_len) * batch;
        std::printf("teacher_flops: %lld\n", static_cast<long long>(tf));
        std::printf("student_flops: %lld\n", static_cast<long long>(sf));
        std::printf("flop_ratio: %.17g\n", static_cast<double>(tf) / static_cast<double>(sf));
        return 0;
    }

    EncoderModel teacher = EncoderModel::init_random(tc, derive_seed(seed, 0));
    EncoderModel student = EncoderModel::init_random(sc, derive_seed(seed, 1));
    BenchReport rep = bench(teacher, student, seq_len, batch, iters, seed);
    std::printf("teacher_mean_s: %.6g\n", rep.teacher_mean_s);
    std::printf("teacher_median_s: %.6g\n", rep.teacher_median_s);
    std::printf("student_mean_s: %.6g\n", rep.student_mean_s);
    std::printf("student_median_s: %.6g\n", rep.student_median_s);
    std::printf("speedup: %.6g\n", rep.speedup);
    std::printf("teacher_flops: %lld\n", static_cast<long long>(rep.teacher_flops));
    std::printf("student_flops: %lld\n", static_cast<long long>(rep.student_flops));
    std::printf("flop_ratio: %.17g\n", rep.flop_ratio);
    if (!rep.warning.empty()) std::printf("warning: %s\n", rep.warning.c_str());
    return 0;
}

int cmd_f1(const std::string& predicted_path, const std::string& gold_path) {
    // One example per line; tokens are whitespace-separated and compared as-is.
    auto read_examples = [](const std::string& path) {
        std::vector<std::vector<std::string>> examples;
        std::istringstream in(read_text_file(path));
        std::string line;
        while (std::getline(in, line)) {
            std::istringstream ls(line);
            std::vector<std::string> tokens;
            std::string t;
            while (ls >> t) tokens.push_back(t);
            examples.push_back(std::move(tokens));
        }
        return examples;
    };
    std::vector<std::vector<std::string>> pred = read_examples(predicted_path);
    std::vector<std::vector<std::string>> gold = read_examples(gold_path);
    F1Report rep = token_f1(pred, gold);
    std::printf("examples: %zu\n", rep.examples.size());
    std::printf("precision: %.9g\n", rep.precision);
    std::printf("recall: %.9g\n", rep.recall);
    std::printf("f1: %.9g\n", rep.f1);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Transformer-encoder distillation toolkit"};
    app.option_defaults()->always_capture_default(true);
    app.require_subcommand(1);

    std::string config_path, corpus_path, out_path, teacher_path, model_path;
    std::string predicted_path, gold_path;
    int steps = 1000, batch = 8, n_max = 0, seq_len = 128, iters = 10, student_layers = 0;
    std::uint64_t seed = 42;
    float mask_rate = 0.15f;
    bool force = false, analytic_only = false;

    CLI::App* params = app.add_subcommand("params", "Print architecture and parameter counts");
    params->add_option("--config", config_path, "run config JSON")->required();

    CLI::App* train = app.add_subcommand("train-teacher", "Masked-LM pretraining from scratch");
    train->add_option("--config", config_path, "run config JSON")->required();
    train->add_option("--corpus", corpus_path, "training text, one document per line")->required();
    train->add_option("--out", out_path, "checkpoint path; sidecars get derived names")->required();
    train->add_option("--steps", steps, "optimizer steps");
    CLI::Option* train_seed = train->add_option("--seed", seed, "overrides the config seed");
    train->add_flag("--force", force, "overwrite existing outputs");

    CLI::App* dist = app.add_subcommand("distill", "Train a student against a frozen teacher");
    dist->add_option("--teacher", teacher_path, "teacher checkpoint")->required();
    dist->add_option("--config", config_path, "run config JSON; its model section is the student")
        ->required();
    dist->add_option("--corpus", corpus_path, "training text, one document per line")->required();
    dist->add_option("--out", out_path, "checkpoint path; sidecars get derived names")->required();
    dist->add_option("--steps", steps, "optimizer steps");
    CLI::Option* dist_seed = dist->add_option("--seed", seed, "overrides the config seed");
    dist->add_flag("--force", force, "overwrite existing outputs");

    CLI::App* eval = app.add_subcommand("eval-mlm", "Masked-token accuracy and perplexity");
    eval->add_option("--model", model_path, "model checkpoint")->required();
    eval->add_option("--corpus", corpus_path, "evaluation text, one document per line")->required();
    eval->add_option("--seed", seed, "masking seed");
    eval->add_option("--batch", batch, "sequences per batch");
    eval->add_option("--n-max", n_max, "max sequence length; 0 picks the model limit (capped at 64)");
    eval->add_option("--mask-rate", mask_rate, "fraction of positions to mask");

    CLI::App* bench_cmd = app.add_subcommand("bench", "Forward-pass wall time, teacher vs student");
    bench_cmd->add_option("--config", config_path, "run config JSON; model section is the teacher")
        ->required();
    bench_cmd->add_option("--student-layers", student_layers,
                          "student depth; 0 means half the teacher");
    bench_cmd->add_option("--seq-len", seq_len, "sequence length");
    bench_cmd->add_option("--batch", batch, "sequences per timed pass");
    bench_cmd->add_option("--iters", iters, "timed passes per model (>= 10)");
    bench_cmd->add_option("--seed", seed, "input generation seed");
    bench_cmd->add_flag("--analytic-only", analytic_only, "skip timing; print flop counts only");

    CLI::App* f1 = app.add_subcommand("f1", "Token-overlap F1 between prediction and gold files");
    f1->add_option("--predicted", predicted_path, "one example per line")->required();
    f1->add_option("--gold", gold_path, "one example per line")->required();

    params->callback([&] { cmd_params(config_path); });
    train->callback([&] {
        cmd_train_teacher(config_path, corpus_path, out_path, steps, seed,
                          train_seed->count() > 0, force);
    });
    dist->callback([&] {
        cmd_distill(teacher_path, config_path, corpus_path, out_path, steps, seed,
                    dist_seed->count() > 0, force);
    });
    eval->callback([&] { cmd_eval_mlm(model_path, corpus_path, seed, batch, n_max, mask_rate); });
    bench_cmd->callback([&] {
        cmd_bench(config_path, student_layers, seq_len, batch, iters, seed, analytic_only);
    });
    f1->callback([&] { cmd_f1(predicted_path, gold_path); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);  // prints help or the parse diagnostic
        return code == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
