#pragma once

#include <cstdint>
#include <string>

#include "distenc/distill.hpp"
#include "distenc/encoder.hpp"
#include "distenc/training.hpp"

namespace distenc {

// Everything a run needs, read from one JSON file with the sections
// model / distill / optimizer / data plus a top-level seed. Only the model
// section is mandatory; missing optional fields keep their defaults.
struct RunConfig {
    ModelConfig model;
    DistillConfig distill;
    OptimizerConfig optimizer;
    DataConfig data;
    std::uint64_t seed = 42;
};

// Strict parse: unknown keys, missing required fields, and wrong types all
// throw ConfigError naming the offending field.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// Fully resolved snapshot (every field explicit) for run manifests.
std::string run_config_to_json(const RunConfig& cfg);

std::string read_text_file(const std::string& path);              // IoError on failure
void write_text_file(const std::string& path, const std::string& content);

}  // namespace distenc
