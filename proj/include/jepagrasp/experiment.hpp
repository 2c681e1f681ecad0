#pragma once

// Pipeline glue shared by the command-line tool and the acceptance runs:
// split-aware data preparation, pretraining, fine-tuning at a label budget,
// and label-efficiency curve rows.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "jepagrasp/config.hpp"
#include "jepagrasp/datasets.hpp"
#include "jepagrasp/splits.hpp"
#include "jepagrasp/training.hpp"

namespace jepagrasp {

struct PreparedData {
  Dataset dataset;
  std::vector<GraspSample> samples;  // quality-filtered, dataset order
  SplitPack pack;
};

PreparedData prepare_data(Dataset dataset, SplitPack pack, double min_quality = kDefaultMinQuality);

// Unlabeled pretraining pool: every object of the pack's full training set.
std::vector<ObjectTokens> pretrain_objects(const PreparedData& data, const TokenizerConfig& cfg);

using Progress = std::function<void(const std::string&)>;

tc::ParameterSet<float> run_pretraining(const ExperimentConfig& cfg, const PreparedData& data, MetricsLog* log = nullptr,
                                        const Progress& progress = {});

struct FinetuneResult {
  EvalReport val;
  MetricsLog log;
  tc::ParameterSet<float> params;
};

// Fresh model seeded by `seed`; the backbone is overwritten from `backbone`
// when given. Trains on the budget's objects and evaluates on val.
FinetuneResult run_finetune(const ExperimentConfig& cfg, const PreparedData& data, int budget,
                            const tc::ParameterSet<float>* backbone, std::uint64_t seed, const Progress& progress = {});

struct CurveRow {
  int budget = 0;
  std::string init;  // scratch or pretrained
  std::uint64_t seed = 0;
  double rmse_top_logit = 0.0;
  double coverage = 0.0;
  double selection_gap = 0.0;
};

std::string curves_header();
std::string curve_csv_row(const CurveRow& row);
std::vector<CurveRow> parse_curves_csv(const std::string& text, const std::string& origin);

// Mean top-logit RMSE per (budget, init), as printable text.
std::string curves_summary(const std::vector<CurveRow>& rows);

}  // namespace jepagrasp
