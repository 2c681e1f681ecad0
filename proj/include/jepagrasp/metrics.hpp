#pragma once

// Joint-angle evaluation: top-logit RMSE, best-of-K RMSE, selection gap and
// Coverage@threshold.
//
// RMSE is computed per sample over the 12 joints and then averaged over
// samples. This differs from the training loss, which sums squared errors.

#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "jepagrasp/grasphead.hpp"

namespace jepagrasp {

inline constexpr double kDefaultCoverageThreshold = std::numbers::pi / 12;  // 15 degrees

enum class CoverageNorm {
  kMaxAbs,  // every joint within the threshold
  kRmse,    // per-sample RMSE within the threshold
};

struct EvalReport {
  double rmse_top_logit = 0.0;
  double rmse_best_of_k = 0.0;
  double selection_gap = 0.0;
  double coverage = 0.0;
  double threshold = kDefaultCoverageThreshold;
  std::size_t n_samples = 0;

  static std::string csv_header();
  std::string csv_row() const;
  std::string pretty() const;
};

double sample_rmse(const JointVector& pred, const JointVector& truth);
double max_abs_error(const JointVector& pred, const JointVector& truth);

bool is_covered(const HypothesisSet& h, const JointVector& truth, double threshold,
                CoverageNorm norm = CoverageNorm::kMaxAbs);

// Throws ConfigError on an empty split or mismatched lengths.
EvalReport evaluate(std::span<const HypothesisSet> predictions, std::span<const JointVector> truths,
                    double threshold = kDefaultCoverageThreshold, CoverageNorm norm = CoverageNorm::kMaxAbs);

// RMSE restricted to one joint, pooled over samples (used for mode-collapse
// diagnostics).
double joint_rmse(std::span<const JointVector> preds, std::span<const JointVector> truths, std::size_t joint);

}  // namespace jepagrasp
