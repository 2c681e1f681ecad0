#pragma once

// Self-supervised latent-prediction pretraining with an EMA target encoder,
// and supervised fine-tuning of backbone + attention pool + grasp head with
// two learning-rate groups.
//
// Parameter naming:
//   backbone.*   context encoder (patch embedder, positions, blocks)
//   predictor.*  latent predictor (pretraining only)
//   pool.*       attention pooling (fine-tuning)
//   head.*       grasp head (fine-tuning)

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "jepagrasp/datasets.hpp"
#include "jepagrasp/encoder.hpp"
#include "jepagrasp/grasphead.hpp"
#include "jepagrasp/metrics.hpp"
#include "jepagrasp/sequencing.hpp"
#include "jepagrasp/tensor.hpp"

namespace jepagrasp {

inline constexpr int kBackboneGroup = 0;
inline constexpr int kHeadGroup = 1;

struct ModelConfig {
  TokenizerConfig tokenizer;
  EncoderConfig encoder;
  PredictorConfig predictor;
  HeadConfig head;

  void validate() const;
};

// Patches of one cloud in sequencer order, ready for the encoder.
struct ObjectTokens {
  std::string object_id;
  int category_id = 0;
  std::vector<Point3> positions;   // [G] patch centers
  tc::Tensor<float> relative;      // [G*S, 3] center-relative members
};

ObjectTokens tokenize_object(const PointCloud& cloud, int category_id, const TokenizerConfig& cfg);

// Backbone + attention pool + grasp head under one parameter set.
class GraspModel {
 public:
  explicit GraspModel(const ModelConfig& cfg);

  // Fresh parameters; backbone in group 0, pool and head in group 1.
  void init(std::uint64_t seed);
  // Overwrites backbone.* (and pool.* if present) from a checkpoint.
  std::size_t load_backbone(const tc::ParameterSet<float>& checkpoint);

  tc::Var<float> latents(tc::Graph<float>& g, const ObjectTokens& obj) const;
  tc::Var<float> pooled(tc::Graph<float>& g, tc::Var<float> latents) const;
  HeadOutput<float> head_forward(tc::Graph<float>& g, tc::Var<float> embedding, std::span<const HandPose> poses) const;

  std::vector<HypothesisSet> predict(const ObjectTokens& obj, std::span<const HandPose> poses) const;

  const ModelConfig& config() const { return cfg_; }
  tc::ParameterSet<float>& params() { return params_; }
  const tc::ParameterSet<float>& params() const { return params_; }

 private:
  ModelConfig cfg_;
  tc::ParameterSet<float> params_;
  PointEncoder<float> encoder_;
  AttentionPool<float> pool_;
  GraspHead<float> head_;
};

// ---- metrics log ----------------------------------------------------------

// CSV with columns step,split,metric,value.
class MetricsLog {
 public:
  void add(std::size_t step, const std::string& split, const std::string& metric, double value);
  void add_report(std::size_t step, const std::string& split, const EvalReport& report);
  std::string csv() const;
  void write(const std::string& path) const;
  std::size_t size() const { return rows_.size(); }

  struct Row {
    std::size_t step;
    std::string split;
    std::string metric;
    double value;
  };
  const std::vector<Row>& rows() const { return rows_; }

 private:
  std::vector<Row> rows_;
};

// ---- pretraining ----------------------------------------------------------

enum class LatentLoss { kSmoothL1, kMse };

struct PretrainConfig {
  std::size_t steps = 300;
  std::size_t batch_size = 8;
  double lr = 5e-4;
  double tau_start = 0.996;
  double tau_end = 1.0;
  MaskConfig mask;
  LatentLoss loss = LatentLoss::kSmoothL1;
  bool normalize_targets = false;  // layer-norm the target latents (no affine)
  bool cosine_decay = false;
  std::size_t log_every = 10;
  std::size_t collapse_probe_objects = 32;
  double collapse_threshold = 1e-3;
  std::uint64_t seed = 0;

  void validate() const;
  double tau_at(std::size_t step) const;
};

struct PretrainStepStats {
  double loss = 0.0;
  double tau = 0.0;
  double target_grad_max_abs = 0.0;  // must stay exactly 0
};

class Pretrainer {
 public:
  Pretrainer(const ModelConfig& model, const PretrainConfig& cfg, std::vector<ObjectTokens> objects);

  PretrainStepStats step();

  // Std across probe objects of mean-pooled full-sequence context latents,
  // averaged over embedding dimensions.
  double embedding_std() const;

  // Runs every step, logging loss/tau/embedding std every log_every steps.
  // Throws NumericError on divergence and VerificationError on collapse or a
  // non-zero target gradient.
  void run(MetricsLog* log = nullptr, const std::function<void(std::size_t, const PretrainStepStats&)>& progress = {});

  // Context encoder only; predictor and target encoder are discarded.
  tc::ParameterSet<float> backbone() const;

  const tc::ParameterSet<float>& context_params() const { return context_; }
  const tc::ParameterSet<float>& target_params() const { return target_; }
  const tc::Gradients<float>& last_target_grads() const { return target_grads_; }
  std::size_t steps_done() const { return step_; }

 private:
  ModelConfig model_;
  PretrainConfig cfg_;
  std::vector<ObjectTokens> objects_;
  PointEncoder<float> encoder_;
  Predictor<float> predictor_;
  tc::ParameterSet<float> context_;  // backbone.* + predictor.*
  tc::ParameterSet<float> target_;   // EMA copy of backbone.*
  std::unique_ptr<tc::Adam<float>> adam_;
  tc::Gradients<float> target_grads_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t step_ = 0;
};

// ---- fine-tuning ----------------------------------------------------------

struct FinetuneConfig {
  double lr_backbone = 1e-5;
  double lr_head = 1e-3;
  std::size_t steps = 1500;
  std::size_t batch_objects = 8;
  std::size_t samples_per_object = 4;
  bool freeze_backbone = false;
  bool freeze_tokenizer = false;
  bool cosine_decay = false;
  std::size_t eval_every = 0;  // 0: only at the end
  std::uint64_t seed = 0;

  void validate() const;
};

struct LabeledObject {
  ObjectTokens tokens;
  std::vector<HandPose> poses;
  std::vector<JointVector> joints;
};

// Groups quality-filtered samples under their tokenized objects, keeping
// only the listed object ids (in the given order).
std::vector<LabeledObject> labeled_objects(const Dataset& ds, std::span<const GraspSample> samples,
                                           std::span<const std::string> object_ids, const TokenizerConfig& cfg);

class Finetuner {
 public:
  Finetuner(GraspModel& model, const FinetuneConfig& cfg, std::vector<LabeledObject> train);

  // One optimizer step; returns the mean WTA loss over the batch.
  double step();
  void run(MetricsLog* log = nullptr, std::span<const LabeledObject> val = {},
           const std::function<void(std::size_t, double)>& progress = {});

  std::size_t steps_done() const { return step_; }

 private:
  GraspModel& model_;
  FinetuneConfig cfg_;
  std::vector<LabeledObject> train_;
  std::vector<tc::Tensor<float>> frozen_latents_;  // cached when the backbone is frozen
  std::unique_ptr<tc::Adam<float>> adam_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t step_ = 0;
};

// Top-logit / best-of-K / coverage over every sample of the given objects.
EvalReport evaluate_model(const GraspModel& model, std::span<const LabeledObject> objects,
                          double threshold = kDefaultCoverageThreshold, CoverageNorm norm = CoverageNorm::kMaxAbs);

// Per-sample predictions in object order, for diagnostics.
std::vector<HypothesisSet> predict_all(const GraspModel& model, std::span<const LabeledObject> objects);

}  // namespace jepagrasp
