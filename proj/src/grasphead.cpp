#include "jepagrasp/grasphead.hpp"

#include <algorithm>
#include <cmath>

#include "jepagrasp/error.hpp"

namespace jepagrasp {

HandPose HandPose::canonical(std::array<double, 3> translation, std::array<double, 4> quaternion) {
  double n = 0.0;
  for (double q : quaternion) n += q * q;
  n = std::sqrt(n);
  if (!(n > 0.0) || !std::isfinite(n)) throw ConfigError("hand pose: quaternion has zero or non-finite norm");
  const double sign = quaternion[0] < 0.0 ? -1.0 : 1.0;
  HandPose pose;
  pose.translation = translation;
  for (std::size_t i = 0; i < 4; ++i) pose.quaternion[i] = sign * quaternion[i] / n;
  return pose;
}

bool HandPose::valid(double tol) const {
  double n = 0.0;
  for (double q : quaternion) n += q * q;
  for (double t : translation) {
    if (!std::isfinite(t)) return false;
  }
  return std::abs(std::sqrt(n) - 1.0) <= tol && quaternion[0] >= 0.0;
}

std::array<double, kPoseParams> HandPose::params() const {
  return {translation[0], translation[1], translation[2], quaternion[0], quaternion[1], quaternion[2], quaternion[3]};
}

JointLimits::JointLimits() {
  lo.fill(-std::numbers::pi / 2);
  hi.fill(std::numbers::pi / 2);
}

bool JointLimits::contains(const JointVector& j) const {
  for (std::size_t d = 0; d < kNumJoints; ++d) {
    if (!std::isfinite(j[d]) || j[d] < lo[d] || j[d] > hi[d]) return false;
  }
  return true;
}

void HeadConfig::validate() const {
  if (num_hypotheses == 0) throw ConfigError("head: K must be >= 1");
  if (hidden_dim == 0) throw ConfigError("head: hidden_dim must be >= 1");
  if (!(alpha >= 0.0)) throw ConfigError("head: alpha must be >= 0");
  for (std::size_t d = 0; d < kNumJoints; ++d) {
    if (!(limits.lo[d] < limits.hi[d])) throw ConfigError("head: joint limits need lo < hi");
  }
}

template <typename T>
void GraspHead<T>::init(tc::ParameterSet<T>& params, const std::string& prefix, Rng& rng, int group) {
  cfg_.validate();
  if (embed_dim_ == 0) throw ConfigError("head: embedding width must be >= 1");
  std::size_t in = embed_dim_ + kPoseParams;
  hidden_.resize(cfg_.hidden_layers);
  for (std::size_t i = 0; i < cfg_.hidden_layers; ++i) {
    hidden_[i].init(params, prefix + ".fc" + std::to_string(i + 1), in, cfg_.hidden_dim, rng, group);
    in = cfg_.hidden_dim;
  }
  out_.init(params, prefix + ".out", in, cfg_.num_hypotheses * (kNumJoints + 1), rng, group);
}

template <typename T>
HeadOutput<T> GraspHead<T>::forward(tc::Graph<T>& g, const tc::ParameterSet<T>& params, tc::Var<T> embeddings,
                                    tc::Var<T> poses) const {
  const std::size_t b = poses.rows();
  if (poses.cols() != kPoseParams) throw ConfigError("head: poses must have 7 columns");
  if (embeddings.cols() != embed_dim_) throw ConfigError("head: embedding width mismatch");
  if (embeddings.rows() == 1 && b != 1) {
    embeddings = tc::gather_rows(embeddings, std::vector<std::size_t>(b, 0));
  }
  if (embeddings.rows() != b) throw ConfigError("head: embedding and pose batch sizes differ");
  auto x = tc::concat<T>({embeddings, poses}, 1);
  for (const auto& layer : hidden_) x = tc::relu(layer(g, params, x));
  auto out = out_(g, params, x);
  const std::size_t k = cfg_.num_hypotheses;
  std::vector<T> mult(k * kNumJoints), shift(k * kNumJoints);
  for (std::size_t c = 0; c < mult.size(); ++c) {
    const std::size_t d = c % kNumJoints;
    mult[c] = T(0.5 * (cfg_.limits.hi[d] - cfg_.limits.lo[d]));
    shift[c] = T(0.5 * (cfg_.limits.hi[d] + cfg_.limits.lo[d]));
  }
  auto joints = tc::affine_cols(tc::tanh(tc::slice_cols(out, 0, k * kNumJoints)), std::move(mult), std::move(shift));
  return {joints, tc::slice_cols(out, k * kNumJoints, k)};
}

template <typename T>
HypothesisSet GraspHead<T>::hypotheses(const HeadOutput<T>& out, std::size_t b) const {
  HypothesisSet h = hypotheses_at(out, b, cfg_.num_hypotheses);
  for (auto& j : h.joints) {
    for (std::size_t d = 0; d < kNumJoints; ++d) j[d] = std::clamp(j[d], cfg_.limits.lo[d], cfg_.limits.hi[d]);
  }
  return h;
}

template <typename T>
tc::Tensor<T> pose_tensor(std::span<const HandPose> poses) {
  tc::Tensor<T> out({poses.size(), kPoseParams});
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const auto p = poses[i].params();
    for (std::size_t c = 0; c < kPoseParams; ++c) out.at(i, c) = T(p[c]);
  }
  return out;
}

template <typename T>
HypothesisSet hypotheses_at(const HeadOutput<T>& out, std::size_t b, std::size_t k) {
  HypothesisSet h;
  h.joints.resize(k);
  h.logits.resize(k);
  const auto& jv = out.joints.value();
  const auto& lv = out.logits.value();
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t d = 0; d < kNumJoints; ++d) h.joints[i][d] = double(jv[b * k * kNumJoints + i * kNumJoints + d]);
    h.logits[i] = double(lv[b * k + i]);
  }
  return h;
}

double squared_joint_distance(const JointVector& a, const JointVector& b) {
  double s = 0.0;
  for (std::size_t d = 0; d < kNumJoints; ++d) s += (a[d] - b[d]) * (a[d] - b[d]);
  return s;
}

std::size_t wta_winner(const HypothesisSet& h, const JointVector& truth) {
  if (h.joints.empty()) throw ConfigError("wta: empty hypothesis set");
  std::size_t best = 0;
  double best_d = squared_joint_distance(h.joints[0], truth);
  for (std::size_t k = 1; k < h.joints.size(); ++k) {
    const double d = squared_joint_distance(h.joints[k], truth);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

std::size_t top_logit_index(std::span<const double> logits) {
  if (logits.empty()) throw ConfigError("top-logit selection on empty hypothesis set");
  std::size_t best = 0;
  for (std::size_t k = 1; k < logits.size(); ++k) {
    if (logits[k] > logits[best]) best = k;
  }
  return best;
}

JointVector select_top_logit(const HypothesisSet& h) {
  if (h.logits.size() != h.joints.size()) throw ConfigError("hypothesis set has mismatched logits");
  return h.joints[top_logit_index(h.logits)];
}

template <typename T>
WtaLoss<T> wta_loss(tc::Var<T> joints, tc::Var<T> logits, const JointVector& truth, double alpha) {
  const std::size_t k = logits.size();
  if (k == 0) throw ConfigError("wta: K must be >= 1");
  if (joints.size() != k * kNumJoints) throw ConfigError("wta: joints must hold K*12 values");
  if (!(alpha >= 0.0)) throw ConfigError("wta: alpha must be >= 0");
  auto& g = *joints.graph();

  const auto& jv = joints.value();
  std::size_t winner = 0;
  double best = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    double s = 0.0;
    for (std::size_t d = 0; d < kNumJoints; ++d) {
      const double diff = double(jv[i * kNumJoints + d]) - truth[d];
      s += diff * diff;
    }
    if (i == 0 || s < best) {
      best = s;
      winner = i;
    }
  }

  if (joints.rows() != k) joints = tc::reshape(joints, {k, kNumJoints});
  tc::Tensor<T> target({1, kNumJoints});
  for (std::size_t d = 0; d < kNumJoints; ++d) target[d] = T(truth[d]);
  auto regression = tc::sum_squares(tc::sub(tc::gather_rows(joints, {winner}), g.constant(std::move(target))));
  auto selector = tc::cross_entropy_from_logits(logits, winner);
  return {tc::add(regression, tc::scale(selector, T(alpha))), winner};
}

template <typename T>
tc::Var<T> wta_batch_loss(const HeadOutput<T>& out, std::span<const JointVector> truths, double alpha,
                          std::vector<std::size_t>* winners) {
  const std::size_t b = out.logits.rows();
  if (truths.size() != b || b == 0) throw ConfigError("wta: batch and truth counts differ");
  std::vector<tc::Var<T>> losses;
  losses.reserve(b);
  if (winners) winners->clear();
  for (std::size_t i = 0; i < b; ++i) {
    auto r = wta_loss(tc::gather_rows(out.joints, {i}), tc::gather_rows(out.logits, {i}), truths[i], alpha);
    losses.push_back(r.loss);
    if (winners) winners->push_back(r.winner);
  }
  return tc::mean_over_axis(tc::concat(losses, 0), 0);
}

template <typename T>
tc::Var<T> squared_error_batch_loss(const HeadOutput<T>& out, std::span<const JointVector> truths) {
  const std::size_t b = out.logits.rows();
  if (out.logits.cols() != 1) throw ConfigError("squared error reference needs K=1");
  if (truths.size() != b || b == 0) throw ConfigError("batch and truth counts differ");
  auto& g = *out.joints.graph();
  std::vector<tc::Var<T>> losses;
  for (std::size_t i = 0; i < b; ++i) {
    tc::Tensor<T> target({1, kNumJoints});
    for (std::size_t d = 0; d < kNumJoints; ++d) target[d] = T(truths[i][d]);
    losses.push_back(tc::sum_squares(tc::sub(tc::gather_rows(out.joints, {i}), g.constant(std::move(target)))));
  }
  return tc::mean_over_axis(tc::concat(losses, 0), 0);
}

#define JEPAGRASP_INSTANTIATE(T)                                                                       \
  template class GraspHead<T>;                                                                         \
  template tc::Tensor<T> pose_tensor(std::span<const HandPose>);                                       \
  template HypothesisSet hypotheses_at(const HeadOutput<T>&, std::size_t, std::size_t);                \
  template WtaLoss<T> wta_loss(tc::Var<T>, tc::Var<T>, const JointVector&, double);                    \
  template tc::Var<T> wta_batch_loss(const HeadOutput<T>&, std::span<const JointVector>, double,       \
                                     std::vector<std::size_t>*);                                       \
  template tc::Var<T> squared_error_batch_loss(const HeadOutput<T>&, std::span<const JointVector>);

JEPAGRASP_INSTANTIATE(float)
JEPAGRASP_INSTANTIATE(double)

#undef JEPAGRASP_INSTANTIATE

}  // namespace jepagrasp
