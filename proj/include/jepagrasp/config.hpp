#pragma once

// Experiment configuration: a flat `key = value` text format.
//
//   # comment
//   seed = 3
//   encoder.depth = 2
//   pretrain.mask.num_targets = 4
//
// Unknown keys, malformed values and duplicate keys are configuration
// errors. `config_schema()` lists every key with its default.

#include <cstdint>
#include <string>
#include <vector>

#include "jepagrasp/datasets.hpp"
#include "jepagrasp/metrics.hpp"
#include "jepagrasp/training.hpp"

namespace jepagrasp {

struct ExperimentConfig {
  std::string data_root = "data";
  std::string output_dir = "runs";
  std::string pack = "A";
  int budget = 100;
  std::uint64_t seed = 0;
  double min_quality = kDefaultMinQuality;
  double threshold = kDefaultCoverageThreshold;
  CoverageNorm coverage_norm = CoverageNorm::kMaxAbs;

  DatasetConfig data;
  ModelConfig model;
  PretrainConfig pretrain;
  FinetuneConfig finetune;

  // Checks everything that does not depend on files.
  void validate() const;
};

struct ConfigKey {
  std::string key;
  std::string help;
};

// Applies one assignment; throws ConfigError for unknown keys or bad values.
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const ExperimentConfig& cfg, const std::string& key);

// Applies `key = value` lines on top of cfg.
void apply_config_text(ExperimentConfig& cfg, const std::string& text, const std::string& origin = "<config>");
ExperimentConfig load_config(const std::string& path);

std::vector<ConfigKey> config_keys();
// Every key with its current value, one `key = value` line each.
std::string dump_config(const ExperimentConfig& cfg);
// Key, default and description for documentation and `--help-config`.
std::string config_schema();

}  // namespace jepagrasp
