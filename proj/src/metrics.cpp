#include "jepagrasp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <sstream>

#include "jepagrasp/error.hpp"

namespace jepagrasp {

double sample_rmse(const JointVector& pred, const JointVector& truth) {
  return std::sqrt(squared_joint_distance(pred, truth) / double(kNumJoints));
}

double max_abs_error(const JointVector& pred, const JointVector& truth) {
  double m = 0.0;
  for (std::size_t d = 0; d < kNumJoints; ++d) m = std::max(m, std::abs(pred[d] - truth[d]));
  return m;
}

bool is_covered(const HypothesisSet& h, const JointVector& truth, double threshold, CoverageNorm norm) {
  for (const auto& j : h.joints) {
    const double err = norm == CoverageNorm::kMaxAbs ? max_abs_error(j, truth) : sample_rmse(j, truth);
    if (err <= threshold) return true;
  }
  return false;
}

EvalReport evaluate(std::span<const HypothesisSet> predictions, std::span<const JointVector> truths, double threshold,
                    CoverageNorm norm) {
  if (predictions.empty()) throw ConfigError("evaluate: empty split");
  if (predictions.size() != truths.size()) throw ConfigError("evaluate: prediction and truth counts differ");
  EvalReport r;
  r.threshold = threshold;
  r.n_samples = predictions.size();
  double top = 0.0, best = 0.0;
  std::size_t covered = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& h = predictions[i];
    if (h.joints.empty()) throw ConfigError("evaluate: empty hypothesis set");
    top += sample_rmse(select_top_logit(h), truths[i]);
    double b = sample_rmse(h.joints[0], truths[i]);
    for (std::size_t k = 1; k < h.joints.size(); ++k) b = std::min(b, sample_rmse(h.joints[k], truths[i]));
    best += b;
    if (is_covered(h, truths[i], threshold, norm)) ++covered;
  }
  const double n = double(predictions.size());
  r.rmse_top_logit = top / n;
  r.rmse_best_of_k = best / n;
  r.selection_gap = r.rmse_top_logit - r.rmse_best_of_k;
  r.coverage = double(covered) / n;
  return r;
}

double joint_rmse(std::span<const JointVector> preds, std::span<const JointVector> truths, std::size_t joint) {
  if (preds.empty() || preds.size() != truths.size()) throw ConfigError("joint_rmse: bad input sizes");
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) s += (preds[i][joint] - truths[i][joint]) * (preds[i][joint] - truths[i][joint]);
  return std::sqrt(s / double(preds.size()));
}

std::string EvalReport::csv_header() {
  return "rmse_top_logit,rmse_best_of_k,selection_gap,coverage,threshold,n_samples";
}

std::string EvalReport::csv_row() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g,%.9g,%.9g,%zu", rmse_top_logit, rmse_best_of_k, selection_gap,
                coverage, threshold, n_samples);
  return buf;
}

std::string EvalReport::pretty() const {
  std::ostringstream os;
  os.precision(4);
  os << std::fixed;
  os << "samples            " << n_samples << '\n'
     << "top-logit RMSE     " << rmse_top_logit << " rad\n"
     << "best-of-K RMSE     " << rmse_best_of_k << " rad\n"
     << "selection gap      " << selection_gap << " rad\n";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "coverage@%.1fdeg", threshold * 180.0 / std::numbers::pi);
  os << std::left << std::setw(19) << buf << coverage << '\n';
  return os.str();
}

}  // namespace jepagrasp
