#pragma once

// K-hypothesis joint-angle head with a logit selector.
//
// Training uses the winner-takes-all objective
//   k* = argmin_k ||j_k - j||^2,   L = ||j_k* - j||^2 + alpha * CE(logits, k*)
// where the squared norm sums over all 12 joints. Inference picks the
// hypothesis with the largest logit. Both argmin and argmax break ties toward
// the lowest index.

#include <array>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "jepagrasp/layers.hpp"
#include "jepagrasp/tensor.hpp"

namespace jepagrasp {

inline constexpr std::size_t kNumJoints = 12;
inline constexpr std::size_t kPoseParams = 7;

using JointVector = std::array<double, kNumJoints>;

struct HandPose {
  std::array<double, 3> translation{};
  std::array<double, 4> quaternion{1.0, 0.0, 0.0, 0.0};  // w, x, y, z

  // Unit norm with non-negative scalar part.
  static HandPose canonical(std::array<double, 3> translation, std::array<double, 4> quaternion);
  bool valid(double tol = 1e-6) const;
  std::array<double, kPoseParams> params() const;
};

struct JointLimits {
  JointVector lo;
  JointVector hi;

  JointLimits();
  bool contains(const JointVector& j) const;
};

struct HypothesisSet {
  std::vector<JointVector> joints;
  std::vector<double> logits;

  std::size_t size() const { return joints.size(); }
};

struct HeadConfig {
  std::size_t num_hypotheses = 5;
  std::size_t hidden_dim = 256;
  std::size_t hidden_layers = 2;
  double alpha = 0.1;
  JointLimits limits;

  void validate() const;
};

template <typename T>
struct HeadOutput {
  tc::Var<T> joints;  // [B, K*12], inside the joint limits
  tc::Var<T> logits;  // [B, K]
};

// MLP over concat(object embedding, pose) -> K*12 squashed joints + K logits.
template <typename T>
class GraspHead {
 public:
  GraspHead() = default;
  GraspHead(std::size_t embed_dim, const HeadConfig& cfg) : embed_dim_(embed_dim), cfg_(cfg) {}

  void init(tc::ParameterSet<T>& params, const std::string& prefix, Rng& rng, int group = 0);

  // embeddings [B, D] (or [1, D], broadcast over the poses), poses [B, 7].
  HeadOutput<T> forward(tc::Graph<T>& g, const tc::ParameterSet<T>& params, tc::Var<T> embeddings,
                 tc::Var<T> poses) const;

  // Sample b as plain values, clamped to the limits (float rounding of the
  // squashing map can land an ulp outside).
  HypothesisSet hypotheses(const HeadOutput<T>& out, std::size_t b) const;

  const HeadConfig& config() const { return cfg_; }
  std::size_t embed_dim() const { return embed_dim_; }

 private:
  std::size_t embed_dim_ = 0;
  HeadConfig cfg_;
  std::vector<Linear<T>> hidden_;
  Linear<T> out_;
};

template <typename T>
tc::Tensor<T> pose_tensor(std::span<const HandPose> poses);

// Sample b of a head output as plain values.
template <typename T>
HypothesisSet hypotheses_at(const HeadOutput<T>& out, std::size_t b, std::size_t k);

// Squared joint distance summed over the 12 joints.
double squared_joint_distance(const JointVector& a, const JointVector& b);

std::size_t wta_winner(const HypothesisSet& h, const JointVector& truth);
std::size_t top_logit_index(std::span<const double> logits);
JointVector select_top_logit(const HypothesisSet& h);

template <typename T>
struct WtaLoss {
  tc::Var<T> loss;
  std::size_t winner = 0;
};

// Loss for one sample: joints [K, 12] (or [1, K*12]) and logits with K entries.
// Only the winning row of `joints` receives gradient.
template <typename T>
WtaLoss<T> wta_loss(tc::Var<T> joints, tc::Var<T> logits, const JointVector& truth, double alpha);

// Mean of per-sample WTA losses over a head output batch.
template <typename T>
tc::Var<T> wta_batch_loss(const HeadOutput<T>& out, std::span<const JointVector> truths,
                          double alpha, std::vector<std::size_t>* winners = nullptr);

// Mean of per-sample squared errors ||j_1 - j||^2 for a K=1 output; the
// reference the WTA objective reduces to.
template <typename T>
tc::Var<T> squared_error_batch_loss(const HeadOutput<T>& out, std::span<const JointVector> truths);

}  // namespace jepagrasp
