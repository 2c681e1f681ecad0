#include "jepagrasp/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>

#include "jepagrasp/error.hpp"

namespace jepagrasp {

void ModelConfig::validate() const {
  tokenizer.validate();
  encoder.validate();
  head.validate();
  if (tokenizer.embed_dim != encoder.embed_dim) {
    throw ConfigError("tokenizer embed_dim " + std::to_string(tokenizer.embed_dim) + " differs from encoder embed_dim " +
                      std::to_string(encoder.embed_dim));
  }
}

ObjectTokens tokenize_object(const PointCloud& cloud, int category_id, const TokenizerConfig& cfg) {
  const PatchSet raw = make_patches(cloud, cfg);
  const PatchSet patches = raw.permuted(sequence_centers(raw.centers));
  ObjectTokens t;
  t.object_id = cloud.object_id;
  t.category_id = category_id;
  t.positions = patches.centers;
  t.relative = relative_members<float>(cloud, patches);
  return t;
}

// ---- GraspModel -----------------------------------------------------------

GraspModel::GraspModel(const ModelConfig& cfg)
    : cfg_(cfg), encoder_(cfg.tokenizer, cfg.encoder), head_(cfg.encoder.embed_dim, cfg.head) {
  cfg_.validate();
}

void GraspModel::init(std::uint64_t seed) {
  params_ = {};
  Rng backbone_rng = Rng::derive(seed, 1);
  Rng pool_rng = Rng::derive(seed, 2);
  Rng head_rng = Rng::derive(seed, 3);
  encoder_.init(params_, "backbone", backbone_rng);
  pool_.init(params_, "pool", cfg_.encoder.embed_dim, pool_rng, kHeadGroup);
  head_.init(params_, "head", head_rng, kHeadGroup);
}

std::size_t GraspModel::load_backbone(const tc::ParameterSet<float>& checkpoint) {
  std::size_t expected = 0;
  for (const auto& p : params_) {
    if (p.name.starts_with("backbone.")) {
      ++expected;
      if (!checkpoint.contains(p.name)) throw ConfigError("checkpoint lacks '" + p.name + "'");
    }
  }
  if (expected == 0) throw ConfigError("load_backbone: model is not initialized");
  return params_.copy_from(checkpoint, "backbone.") + params_.copy_from(checkpoint, "pool.");
}

tc::Var<float> GraspModel::latents(tc::Graph<float>& g, const ObjectTokens& obj) const {
  auto tokens = encoder_.embed(g, params_, g.constant(obj.relative));
  return encoder_.encode(g, params_, tokens, obj.positions);
}

tc::Var<float> GraspModel::pooled(tc::Graph<float>& g, tc::Var<float> latents) const {
  return pool_.forward(g, params_, latents);
}

HeadOutput<float> GraspModel::head_forward(tc::Graph<float>& g, tc::Var<float> embedding,
                                           std::span<const HandPose> poses) const {
  return head_.forward(g, params_, embedding, g.constant(pose_tensor<float>(poses)));
}

std::vector<HypothesisSet> GraspModel::predict(const ObjectTokens& obj, std::span<const HandPose> poses) const {
  if (poses.empty()) return {};
  tc::Graph<float> g(false);
  const auto out = head_forward(g, pooled(g, latents(g, obj)), poses);
  std::vector<HypothesisSet> result;
  result.reserve(poses.size());
  for (std::size_t b = 0; b < poses.size(); ++b) result.push_back(head_.hypotheses(out, b));
  return result;
}

// ---- MetricsLog -----------------------------------------------------------

void MetricsLog::add(std::size_t step, const std::string& split, const std::string& metric, double value) {
  rows_.push_back({step, split, metric, value});
}

void MetricsLog::add_report(std::size_t step, const std::string& split, const EvalReport& r) {
  add(step, split, "rmse_top_logit", r.rmse_top_logit);
  add(step, split, "rmse_best_of_k", r.rmse_best_of_k);
  add(step, split, "selection_gap", r.selection_gap);
  add(step, split, "coverage", r.coverage);
}

std::string MetricsLog::csv() const {
  std::string out = "step,split,metric,value\n";
  char buf[64];
  for (const auto& r : rows_) {
    std::snprintf(buf, sizeof(buf), "%.9g", r.value);
    out += std::to_string(r.step) + ',' + r.split + ',' + r.metric + ',' + buf + '\n';
  }
  return out;
}

void MetricsLog::write(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << csv();
  if (!out) throw IoError(path + ": write failed");
}

// ---- pretraining ----------------------------------------------------------

namespace {

double cosine_lr(double base, std::size_t step, std::size_t total) {
  return 0.5 * base * (1.0 + std::cos(std::numbers::pi * double(step) / double(std::max<std::size_t>(1, total))));
}

// Epoch-style object sampling without replacement.
std::size_t next_index(std::vector<std::size_t>& order, std::size_t& cursor, std::size_t n, Rng& rng) {
  if (order.size() != n || cursor >= n) {
    order.resize(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    cursor = 0;
  }
  return order[cursor++];
}

std::vector<Point3> pick(std::span<const Point3> points, std::span<const std::size_t> idx) {
  std::vector<Point3> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(points[i]);
  return out;
}

}  // namespace

void PretrainConfig::validate() const {
  if (steps < 1) throw ConfigError("pretrain: steps must be >= 1");
  if (batch_size < 1) throw ConfigError("pretrain: batch_size must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("pretrain: lr must be > 0");
  if (!(tau_start >= 0.0 && tau_start <= 1.0 && tau_end >= 0.0 && tau_end <= 1.0)) {
    throw ConfigError("pretrain: tau must lie in [0, 1]");
  }
  mask.validate();
  if (mask.num_targets == 0) throw ConfigError("pretrain: mask needs at least one target block");
  if (log_every < 1) throw ConfigError("pretrain: log_every must be >= 1");
}

double PretrainConfig::tau_at(std::size_t step) const {
  if (steps <= 1) return tau_start;
  return tau_start + (tau_end - tau_start) * double(std::min(step, steps - 1)) / double(steps - 1);
}

Pretrainer::Pretrainer(const ModelConfig& model, const PretrainConfig& cfg, std::vector<ObjectTokens> objects)
    : model_(model),
      cfg_(cfg),
      objects_(std::move(objects)),
      encoder_(model.tokenizer, model.encoder),
      predictor_(model.encoder, model.predictor),
      rng_(Rng::derive(cfg.seed, 12)) {
  model_.validate();
  cfg_.validate();
  if (objects_.empty()) throw ConfigError("pretrain: no objects");
  for (const auto& o : objects_) {
    if (o.positions.size() < cfg_.mask.min_tokens()) {
      throw MaskError("pretrain: object '" + o.object_id + "' has " + std::to_string(o.positions.size()) +
                      " tokens, mask needs " + std::to_string(cfg_.mask.min_tokens()));
    }
  }
  Rng init = Rng::derive(cfg.seed, 11);
  encoder_.init(context_, "backbone", init);
  predictor_.init(context_, "predictor", init);
  // The target encoder reuses the context encoder's module, so its tensors
  // must sit at the same indices.
  for (const auto& p : context_) {
    if (!p.name.starts_with("backbone.")) continue;
    const std::size_t i = target_.add(p.name, p.value);
    if (i != context_.index_of(p.name)) throw ConfigError("pretrain: backbone parameters must be registered first");
    target_[i].trainable = false;
  }
  adam_ = std::make_unique<tc::Adam<float>>(context_, std::vector<double>{cfg_.lr});
  target_grads_ = tc::Gradients<float>(target_);
}

PretrainStepStats Pretrainer::step() {
  PretrainStepStats stats;
  stats.tau = cfg_.tau_at(step_);
  if (cfg_.cosine_decay) adam_->set_group_lr(0, cosine_lr(cfg_.lr, step_, cfg_.steps));

  tc::Graph<float> g(true);
  std::vector<tc::Var<float>> losses;
  for (std::size_t b = 0; b < cfg_.batch_size; ++b) {
    const auto& obj = objects_[next_index(order_, cursor_, objects_.size(), rng_)];
    const MaskPlan plan = sample_mask(obj.positions.size(), cfg_.mask, rng_);
    const auto target_idx = plan.target_indices();
    const auto relative = g.constant(obj.relative);

    // Stop-gradient targets: the EMA encoder sees the full sequence.
    auto full = encoder_.encode(g, target_, encoder_.embed(g, target_, relative), obj.positions);
    auto targets = tc::gather_rows(full, target_idx);
    if (cfg_.normalize_targets) {
      const std::size_t d = model_.encoder.embed_dim;
      targets = tc::layernorm(targets, g.constant(tc::Tensor<float>({d}, 1.0f)), g.constant(tc::Tensor<float>({d})));
    }

    const auto ctx_pos = pick(obj.positions, plan.context_indices);
    const auto tgt_pos = pick(obj.positions, target_idx);
    auto tokens = encoder_.embed(g, context_, relative);
    auto ctx = encoder_.encode(g, context_, tc::gather_rows(tokens, plan.context_indices), ctx_pos);
    auto pred = predictor_.forward(g, context_, ctx, ctx_pos, tgt_pos);
    losses.push_back(cfg_.loss == LatentLoss::kSmoothL1 ? tc::smooth_l1(pred, targets) : tc::mse(pred, targets));
  }
  auto loss = tc::mean_over_axis(tc::concat(losses, 0), 0);
  stats.loss = double(loss.item());
  if (!std::isfinite(stats.loss)) throw NumericError("pretrain", "non-finite loss");
  g.backward(loss);

  tc::Gradients<float> grads(context_);
  g.accumulate_into(context_, grads);
  target_grads_.zero();
  g.accumulate_into(target_, target_grads_);
  stats.target_grad_max_abs = double(target_grads_.max_abs());

  adam_->step(context_, grads);
  ema_update(target_, context_, stats.tau);
  ++step_;
  return stats;
}

double Pretrainer::embedding_std() const {
  const std::size_t n = std::min(cfg_.collapse_probe_objects, objects_.size());
  const std::size_t d = model_.encoder.embed_dim;
  std::vector<std::vector<double>> pooled(n, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    tc::Graph<float> g(false);
    const auto& obj = objects_[i];
    auto lat = encoder_.encode(g, context_, encoder_.embed(g, context_, g.constant(obj.relative)), obj.positions);
    const auto mean = tc::mean_over_axis(lat, 0).value();
    for (std::size_t c = 0; c < d; ++c) pooled[i][c] = double(mean[c]);
  }
  if (n < 2) return 0.0;
  double total = 0.0;
  for (std::size_t c = 0; c < d; ++c) {
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += pooled[i][c];
    mu /= double(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (pooled[i][c] - mu) * (pooled[i][c] - mu);
    total += std::sqrt(var / double(n));
  }
  return total / double(d);
}

void Pretrainer::run(MetricsLog* log, const std::function<void(std::size_t, const PretrainStepStats&)>& progress) {
  while (step_ < cfg_.steps) {
    const auto stats = step();
    if (stats.target_grad_max_abs != 0.0) {
      throw VerificationError("pretrain: target encoder received a gradient at step " + std::to_string(step_));
    }
    if (progress) progress(step_, stats);
    if (step_ == 1 || step_ % cfg_.log_every == 0 || step_ == cfg_.steps) {
      const double spread = embedding_std();
      if (log) {
        log->add(step_, "pretrain", "loss", stats.loss);
        log->add(step_, "pretrain", "tau", stats.tau);
        log->add(step_, "pretrain", "embedding_std", spread);
      }
      if (spread < cfg_.collapse_threshold) {
        throw VerificationError("pretrain: representation collapse at step " + std::to_string(step_) +
                                " (embedding std " + std::to_string(spread) + ")");
      }
    }
  }
}

tc::ParameterSet<float> Pretrainer::backbone() const {
  tc::ParameterSet<float> out;
  for (const auto& p : context_) {
    if (p.name.starts_with("backbone.")) out.add(p.name, p.value, kBackboneGroup);
  }
  return out;
}

// ---- fine-tuning ----------------------------------------------------------

void FinetuneConfig::validate() const {
  if (!(lr_backbone >= 0.0) || !(lr_head >= 0.0) || !std::isfinite(lr_backbone) || !std::isfinite(lr_head)) {
    throw ConfigError("finetune: learning rates must be finite and >= 0");
  }
  if (steps < 1) throw ConfigError("finetune: steps must be >= 1");
  if (batch_objects < 1 || samples_per_object < 1) throw ConfigError("finetune: batch sizes must be >= 1");
}

std::vector<LabeledObject> labeled_objects(const Dataset& ds, std::span<const GraspSample> samples,
                                           std::span<const std::string> object_ids, const TokenizerConfig& cfg) {
  std::map<std::string, std::size_t> slot;
  std::vector<LabeledObject> out;
  out.reserve(object_ids.size());
  for (const auto& id : object_ids) {
    const std::size_t idx = ds.manifest.index_of(id);
    if (!slot.emplace(id, out.size()).second) throw ConfigError("object '" + id + "' listed twice");
    LabeledObject lo;
    lo.tokens = tokenize_object(ds.clouds[idx], ds.manifest.objects[idx].category_id, cfg);
    out.push_back(std::move(lo));
  }
  for (const auto& s : samples) {
    auto it = slot.find(s.object_id);
    if (it == slot.end()) continue;
    out[it->second].poses.push_back(s.pose);
    out[it->second].joints.push_back(s.joints);
  }
  return out;
}

Finetuner::Finetuner(GraspModel& model, const FinetuneConfig& cfg, std::vector<LabeledObject> train)
    : model_(model), cfg_(cfg), rng_(Rng::derive(cfg.seed, 21)) {
  cfg_.validate();
  for (auto& o : train) {
    if (!o.poses.empty()) train_.push_back(std::move(o));
  }
  if (train_.empty()) throw ConfigError("finetune: no labeled training samples");
  auto& params = model_.params();
  if (params.empty()) throw ConfigError("finetune: model is not initialized");
  if (cfg_.freeze_backbone) params.set_trainable("backbone.", false);
  if (cfg_.freeze_tokenizer) params.set_trainable("backbone.patch.", false);
  adam_ = std::make_unique<tc::Adam<float>>(params, std::vector<double>{cfg_.lr_backbone, cfg_.lr_head});
  if (cfg_.freeze_backbone) {
    for (const auto& o : train_) {
      tc::Graph<float> g(false);
      const auto lat = model_.latents(g, o.tokens);
      frozen_latents_.push_back(tc::Tensor<float>(lat.shape(), lat.value()));
    }
  }
}

double Finetuner::step() {
  if (cfg_.cosine_decay) {
    adam_->set_group_lr(kBackboneGroup, cosine_lr(cfg_.lr_backbone, step_, cfg_.steps));
    adam_->set_group_lr(kHeadGroup, cosine_lr(cfg_.lr_head, step_, cfg_.steps));
  }
  const double alpha = model_.config().head.alpha;
  tc::Graph<float> g(true);
  std::vector<tc::Var<float>> losses;
  for (std::size_t b = 0; b < cfg_.batch_objects; ++b) {
    const std::size_t oi = next_index(order_, cursor_, train_.size(), rng_);
    const auto& obj = train_[oi];
    std::vector<HandPose> poses;
    std::vector<JointVector> truths;
    for (std::size_t s = 0; s < cfg_.samples_per_object; ++s) {
      const std::size_t k = rng_.below(obj.poses.size());
      poses.push_back(obj.poses[k]);
      truths.push_back(obj.joints[k]);
    }
    auto lat = cfg_.freeze_backbone ? g.constant(frozen_latents_[oi]) : model_.latents(g, obj.tokens);
    const auto out = model_.head_forward(g, model_.pooled(g, lat), poses);
    losses.push_back(wta_batch_loss(out, truths, alpha));
  }
  auto loss = tc::mean_over_axis(tc::concat(losses, 0), 0);
  const double value = double(loss.item());
  g.backward(loss);
  tc::Gradients<float> grads(model_.params());
  g.accumulate_into(model_.params(), grads);
  adam_->step(model_.params(), grads);
  ++step_;
  return value;
}

void Finetuner::run(MetricsLog* log, std::span<const LabeledObject> val,
                    const std::function<void(std::size_t, double)>& progress) {
  double running = 0.0;
  std::size_t count = 0;
  while (step_ < cfg_.steps) {
    const double loss = step();
    running += loss;
    ++count;
    if (progress) progress(step_, loss);
    const bool last = step_ == cfg_.steps;
    const bool eval_now = cfg_.eval_every > 0 && step_ % cfg_.eval_every == 0;
    if (log && (eval_now || last)) {
      log->add(step_, "train", "loss", running / double(count));
      running = 0.0;
      count = 0;
      if (!val.empty()) log->add_report(step_, "val", evaluate_model(model_, val));
    }
  }
}

std::vector<HypothesisSet> predict_all(const GraspModel& model, std::span<const LabeledObject> objects) {
  std::vector<HypothesisSet> out;
  for (const auto& o : objects) {
    auto h = model.predict(o.tokens, o.poses);
    for (auto& x : h) out.push_back(std::move(x));
  }
  return out;
}

EvalReport evaluate_model(const GraspModel& model, std::span<const LabeledObject> objects, double threshold,
                          CoverageNorm norm) {
  std::vector<JointVector> truths;
  for (const auto& o : objects) truths.insert(truths.end(), o.joints.begin(), o.joints.end());
  const auto preds = predict_all(model, objects);
  return evaluate(preds, truths, threshold, norm);
}

}  // namespace jepagrasp
