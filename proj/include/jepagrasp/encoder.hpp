#pragma once

// Transformer backbone over patch tokens, the JEPA predictor, EMA target
// updates, and attention pooling into a single object embedding.

#include <span>
#include <string>
#include <vector>

#include "jepagrasp/layers.hpp"
#include "jepagrasp/pointops.hpp"
#include "jepagrasp/tensor.hpp"

namespace jepagrasp {

struct EncoderConfig {
  std::size_t depth = 4;
  std::size_t embed_dim = 128;
  std::size_t heads = 4;
  double mlp_ratio = 4.0;
  bool sinusoidal_positions = true;
  std::size_t position_frequencies = 6;  // per axis; sin and cos each

  std::size_t mlp_width() const;
  std::size_t position_features() const;
  void validate() const;
};

struct PredictorConfig {
  std::size_t depth = 2;
  std::size_t width = 0;  // 0: same as the encoder embedding
  std::size_t heads = 4;
};

// Per-axis sin/cos features of 3-D centers (or raw coordinates when
// sinusoidal positions are disabled), [M, position_features()].
template <typename T>
tc::Tensor<T> position_features(std::span<const Point3> positions, const EncoderConfig& cfg);

// Pre-norm block: x + Attn(LN(x)), then x + MLP(LN(x)) with GELU.
template <typename T>
class TransformerBlock {
 public:
  void init(tc::ParameterSet<T>& params, const std::string& prefix, std::size_t dim, std::size_t mlp_width, Rng& rng);
  tc::Var<T> forward(tc::Graph<T>& g, const tc::ParameterSet<T>& params, tc::Var<T> x, std::size_t heads) const;

 private:
  LayerNorm<T> ln1_, ln2_;
  Linear<T> qkv_, proj_, fc1_, fc2_;
  std::size_t dim_ = 0;
};

// Patch embedder + positional projection + transformer blocks. The same
// class serves as the context encoder and, with a separate ParameterSet
// holding identical names, as the EMA target encoder.
template <typename T>
class PointEncoder {
 public:
  PointEncoder() = default;
  PointEncoder(const TokenizerConfig& tok, const EncoderConfig& enc) : tok_(tok), enc_(enc) {}

  void init(tc::ParameterSet<T>& params, const std::string& prefix, Rng& rng);

  // Patch embeddings [G, D] from center-relative member coordinates.
  tc::Var<T> embed(tc::Graph<T>& g, const tc::ParameterSet<T>& params, tc::Var<T> relative) const;

  // Blocks over tokens [M, D] plus positional encodings of their centers.
  tc::Var<T> encode(tc::Graph<T>& g, const tc::ParameterSet<T>& params, tc::Var<T> tokens,
                    std::span<const Point3> positions) const;

  const EncoderConfig& config() const { return enc_; }
  const TokenizerConfig& tokenizer() const { return tok_; }

 private:
  TokenizerConfig tok_;
  EncoderConfig enc_;
  PatchEmbedder<T> patch_;
  Linear<T> pos_;
  std::vector<TransformerBlock<T>> blocks_;
};

// Narrow transformer over [context latents; mask tokens at target slots].
template <typename T>
class Predictor {
 public:
  Predictor() = default;
  Predictor(const EncoderConfig& enc, const PredictorConfig& cfg) : enc_(enc), cfg_(cfg) {}

  void init(tc::ParameterSet<T>& params, const std::string& prefix, Rng& rng);

  // One D-vector per target position; [0, D] when there are no targets.
  tc::Var<T> forward(tc::Graph<T>& g, const tc::ParameterSet<T>& params, tc::Var<T> context_latents,
                     std::span<const Point3> context_positions, std::span<const Point3> target_positions) const;

 private:
  std::size_t width() const { return cfg_.width ? cfg_.width : enc_.embed_dim; }

  EncoderConfig enc_;
  PredictorConfig cfg_;
  Linear<T> embed_, pos_, out_;
  std::size_t mask_token_ = 0;
  std::vector<TransformerBlock<T>> blocks_;
  LayerNorm<T> norm_;
};

// Learned query attending over latents: softmax(q . K) weighted values.
template <typename T>
class AttentionPool {
 public:
  void init(tc::ParameterSet<T>& params, const std::string& prefix, std::size_t dim, Rng& rng, int group = 0);
  // latents [M, D] -> [1, D]
  tc::Var<T> forward(tc::Graph<T>& g, const tc::ParameterSet<T>& params, tc::Var<T> latents) const;

 private:
  std::size_t query_ = 0;
  Linear<T> key_, value_;
};

// target <- tau * target + (1 - tau) * context for every target parameter;
// the context set must hold a parameter of the same name and shape.
template <typename T>
void ema_update(tc::ParameterSet<T>& target, const tc::ParameterSet<T>& context, double tau);

}  // namespace jepagrasp
