#include "distenc/config_io.hpp"

#include <fstream>
#include <set>

#include "distenc/errors.hpp"
#include "json.hpp"

namespace distenc {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::string& section,
                    const std::set<std::string>& allowed) {
    for (const auto& [key, value] : obj.items())
        if (!allowed.contains(key))
            throw ConfigError("unknown config field " +
                              (section.empty() ? key : section + "." + key));
}

template <typename T>
T require(const json& obj, const std::string& section, const std::string& key) {
    if (!obj.contains(key)) throw ConfigError("config field " + section + "." + key + " is missing");
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config field " + section + "." + key + " has the wrong type");
    }
}

template <typename T>
void optional(const json& obj, const std::string& section, const std::string& key, T& into) {
    if (!obj.contains(key)) return;
    try {
        into = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config field " + section + "." + key + " has the wrong type");
    }
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config root must be an object");
    reject_unknown(j, "", {"model", "distill", "optimizer", "data", "seed"});

    RunConfig cfg;
    if (!j.contains("model")) throw ConfigError("config field model is missing");
    const json& m = j.at("model");
    if (!m.is_object()) throw ConfigError("config field model must be an object");
    reject_unknown(m, "model",
                   {"layers", "hidden", "heads", "ff", "vocab", "positions", "layer_norm_eps"});
    cfg.model.layers = require<int>(m, "model", "layers");
    cfg.model.hidden = require<int>(m, "model", "hidden");
    cfg.model.heads = require<int>(m, "model", "heads");
    cfg.model.ff = require<int>(m, "model", "ff");
    cfg.model.vocab = require<int>(m, "model", "vocab");
    cfg.model.positions = require<int>(m, "model", "positions");
    optional(m, "model", "layer_norm_eps", cfg.model.layer_norm_eps);
    cfg.model.validate();

    if (j.contains("distill")) {
        const json& d = j.at("distill");
        if (!d.is_object()) throw ConfigError("config field distill must be an object");
        reject_unknown(d, "distill",
                       {"alpha", "beta", "gamma", "copy_stride", "temperature", "reverse_kl",
                        "raw_cosine"});
        optional(d, "distill", "alpha", cfg.distill.alpha);
        optional(d, "distill", "beta", cfg.distill.beta);
        optional(d, "distill", "gamma", cfg.distill.gamma);
        optional(d, "distill", "copy_stride", cfg.distill.copy_stride);
        optional(d, "distill", "temperature", cfg.distill.temperature);
        optional(d, "distill", "reverse_kl", cfg.distill.reverse_kl);
        optional(d, "distill", "raw_cosine", cfg.distill.raw_cosine);
        cfg.distill.validate();
    }
    if (j.contains("optimizer")) {
        const json& o = j.at("optimizer");
        if (!o.is_object()) throw ConfigError("config field optimizer must be an object");
        reject_unknown(o, "optimizer",
                       {"lr", "beta1", "beta2", "eps", "warmup_frac", "clip_norm"});
        optional(o, "optimizer", "lr", cfg.optimizer.lr);
        optional(o, "optimizer", "beta1", cfg.optimizer.beta1);
        optional(o, "optimizer", "beta2", cfg.optimizer.beta2);
        optional(o, "optimizer", "eps", cfg.optimizer.eps);
        optional(o, "optimizer", "warmup_frac", cfg.optimizer.warmup_frac);
        optional(o, "optimizer", "clip_norm", cfg.optimizer.clip_norm);
        cfg.optimizer.validate();
    }
    if (j.contains("data")) {
        const json& d = j.at("data");
        if (!d.is_object()) throw ConfigError("config field data must be an object");
        reject_unknown(d, "data", {"n_max", "batch_size", "mask_rate"});
        optional(d, "data", "n_max", cfg.data.n_max);
        optional(d, "data", "batch_size", cfg.data.batch_size);
        optional(d, "data", "mask_rate", cfg.data.mask_rate);
        cfg.data.validate();
    }
    if (j.contains("seed")) {
        try {
            cfg.seed = j.at("seed").get<std::uint64_t>();
        } catch (const json::exception&) {
            throw ConfigError("config field seed has the wrong type");
        }
    }
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    return parse_run_config(read_text_file(path));
}

std::string run_config_to_json(const RunConfig& cfg) {
    json j;
    j["model"] = {{"layers", cfg.model.layers},
                  {"hidden", cfg.model.hidden},
                  {"heads", cfg.model.heads},
                  {"ff", cfg.model.ff},
                  {"vocab", cfg.model.vocab},
                  {"positions", cfg.model.positions},
                  {"layer_norm_eps", cfg.model.layer_norm_eps}};
    j["distill"] = {{"alpha", cfg.distill.alpha},
                    {"beta", cfg.distill.beta},
                    {"gamma", cfg.distill.gamma},
                    {"copy_stride", cfg.distill.copy_stride},
                    {"temperature", cfg.distill.temperature},
                    {"reverse_kl", cfg.distill.reverse_kl},
                    {"raw_cosine", cfg.distill.raw_cosine}};
    j["optimizer"] = {{"lr", cfg.optimizer.lr},
                      {"beta1", cfg.optimizer.beta1},
                      {"beta2", cfg.optimizer.beta2},
                      {"eps", cfg.optimizer.eps},
                      {"warmup_frac", cfg.optimizer.warmup_frac},
                      {"clip_norm", cfg.optimizer.clip_norm}};
    j["data"] = {{"n_max", cfg.data.n_max},
                 {"batch_size", cfg.data.batch_size},
                 {"mask_rate", cfg.data.mask_rate}};
    j["seed"] = cfg.seed;
    return j.dump(2);
}

std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (f.bad()) throw IoError("read failure on " + path);
    return text;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw IoError("short write to " + path);
}

}  // namespace distenc
