#include "jepagrasp/encoder.hpp"

#include <cmath>
#include <numbers>

#include "jepagrasp/error.hpp"

namespace jepagrasp {

std::size_t EncoderConfig::mlp_width() const {
  return std::max<std::size_t>(1, std::size_t(std::llround(mlp_ratio * double(embed_dim))));
}

std::size_t EncoderConfig::position_features() const {
  return sinusoidal_positions ? 3 * 2 * position_frequencies : 3;
}

void EncoderConfig::validate() const {
  if (embed_dim == 0 || heads == 0) throw ConfigError("encoder: embed_dim and heads must be >= 1");
  if (embed_dim % heads != 0) {
    throw ConfigError("encoder: embed_dim " + std::to_string(embed_dim) + " not divisible by heads " +
                      std::to_string(heads));
  }
  if (!(mlp_ratio > 0.0)) throw ConfigError("encoder: mlp_ratio must be > 0");
  if (sinusoidal_positions && position_frequencies == 0) {
    throw ConfigError("encoder: position_frequencies must be >= 1");
  }
}

template <typename T>
tc::Tensor<T> position_features(std::span<const Point3> positions, const EncoderConfig& cfg) {
  const std::size_t width = cfg.position_features();
  tc::Tensor<T> out({positions.size(), width});
  for (std::size_t r = 0; r < positions.size(); ++r) {
    if (!cfg.sinusoidal_positions) {
      for (std::size_t a = 0; a < 3; ++a) out.at(r, a) = T(positions[r][a]);
      continue;
    }
    std::size_t c = 0;
    for (std::size_t a = 0; a < 3; ++a) {
      for (std::size_t f = 0; f < cfg.position_frequencies; ++f) {
        const double w = std::numbers::pi * double(1u << f);
        out.at(r, c++) = T(std::sin(w * positions[r][a]));
        out.at(r, c++) = T(std::cos(w * positions[r][a]));
      }
    }
  }
  return out;
}

// ---- TransformerBlock -----------------------------------------------------

template <typename T>
void TransformerBlock<T>::init(tc::ParameterSet<T>& params, const std::string& prefix, std::size_t dim,
                               std::size_t mlp_width, Rng& rng) {
  dim_ = dim;
  ln1_.init(params, prefix + ".ln1", dim);
  qkv_.init(params, prefix + ".attn.qkv", dim, 3 * dim, rng);
  proj_.init(params, prefix + ".attn.proj", dim, dim, rng);
  ln2_.init(params, prefix + ".ln2", dim);
  fc1_.init(params, prefix + ".mlp.fc1", dim, mlp_width, rng);
  fc2_.init(params, prefix + ".mlp.fc2", mlp_width, dim, rng);
}

template <typename T>
tc::Var<T> TransformerBlock<T>::forward(tc::Graph<T>& g, const tc::ParameterSet<T>& params, tc::Var<T> x,
                                        std::size_t heads) const {
  auto qkv = qkv_(g, params, ln1_(g, params, x));
  auto attn = tc::scaled_dot_attention(tc::slice_cols(qkv, 0, dim_), tc::slice_cols(qkv, dim_, dim_),
                                       tc::slice_cols(qkv, 2 * dim_, dim_), heads);
  x = tc::add(x, proj_(g, params, attn));
  auto h = tc::gelu(fc1_(g, params, ln2_(g, params, x)));
  return tc::add(x, fc2_(g, params, h));
}

// ---- PointEncoder ---------------------------------------------------------

template <typename T>
void PointEncoder<T>::init(tc::ParameterSet<T>& params, const std::string& prefix, Rng& rng) {
  tok_.validate();
  enc_.validate();
  if (tok_.embed_dim != enc_.embed_dim) throw ConfigError("tokenizer and encoder embed_dim differ");
  patch_.init(params, prefix + ".patch", tok_, rng);
  pos_.init(params, prefix + ".pos", enc_.position_features(), enc_.embed_dim, rng);
  blocks_.resize(enc_.depth);
  for (std::size_t i = 0; i < enc_.depth; ++i) {
    blocks_[i].init(params, prefix + ".blocks." + std::to_string(i), enc_.embed_dim, enc_.mlp_width(), rng);
  }
}

template <typename T>
tc::Var<T> PointEncoder<T>::embed(tc::Graph<T>& g, const tc::ParameterSet<T>& params, tc::Var<T> relative) const {
  return patch_.forward(g, params, relative);
}

template <typename T>
tc::Var<T> PointEncoder<T>::encode(tc::Graph<T>& g, const tc::ParameterSet<T>& params, tc::Var<T> tokens,
                                   std::span<const Point3> positions) const {
  if (tokens.rows() == 0) throw ConfigError("encode: needs at least one token");
  if (tokens.rows() != positions.size()) throw ConfigError("encode: token and position counts differ");
  auto pos = pos_(g, params, g.constant(position_features<T>(positions, enc_)));
  auto x = tc::add(tokens, pos);
  for (const auto& b : blocks_) x = b.forward(g, params, x, enc_.heads);
  return x;
}

// ---- Predictor ------------------------------------------------------------

template <typename T>
void Predictor<T>::init(tc::ParameterSet<T>& params, const std::string& prefix, Rng& rng) {
  enc_.validate();
  const std::size_t w = width();
  if (cfg_.heads == 0 || w % cfg_.heads != 0) throw ConfigError("predictor: width not divisible by heads");
  embed_.init(params, prefix + ".embed", enc_.embed_dim, w, rng);
  pos_.init(params, prefix + ".pos", enc_.position_features(), w, rng);
  mask_token_ = params.add(prefix + ".mask_token", normal_tensor<T>({w}, 0.02, rng));
  blocks_.resize(cfg_.depth);
  const std::size_t mlp = std::max<std::size_t>(1, std::size_t(std::llround(enc_.mlp_ratio * double(w))));
  for (std::size_t i = 0; i < cfg_.depth; ++i) {
    blocks_[i].init(params, prefix + ".blocks." + std::to_string(i), w, mlp, rng);
  }
  norm_.init(params, prefix + ".norm", w);
  out_.init(params, prefix + ".out", w, enc_.embed_dim, rng);
}

template <typename T>
tc::Var<T> Predictor<T>::forward(tc::Graph<T>& g, const tc::ParameterSet<T>& params, tc::Var<T> context_latents,
                                 std::span<const Point3> context_positions,
                                 std::span<const Point3> target_positions) const {
  if (context_latents.rows() == 0) throw ConfigError("predictor: empty context");
  if (target_positions.empty()) return g.constant(tc::Tensor<T>({0, enc_.embed_dim}));
  auto ctx = tc::add(embed_(g, params, context_latents),
                     pos_(g, params, g.constant(position_features<T>(context_positions, enc_))));
  auto tgt = tc::add(pos_(g, params, g.constant(position_features<T>(target_positions, enc_))),
                     g.parameter(params, mask_token_));
  auto x = tc::concat<T>({ctx, tgt}, 0);
  for (const auto& b : blocks_) x = b.forward(g, params, x, cfg_.heads);
  std::vector<std::size_t> rows(target_positions.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = context_positions.size() + i;
  return out_(g, params, norm_(g, params, tc::gather_rows(x, std::move(rows))));
}

// ---- AttentionPool --------------------------------------------------------

template <typename T>
void AttentionPool<T>::init(tc::ParameterSet<T>& params, const std::string& prefix, std::size_t dim, Rng& rng,
                            int group) {
  query_ = params.add(prefix + ".query", normal_tensor<T>({1, dim}, 0.02, rng), group);
  key_.init(params, prefix + ".key", dim, dim, rng, group);
  value_.init(params, prefix + ".value", dim, dim, rng, group);
}

template <typename T>
tc::Var<T> AttentionPool<T>::forward(tc::Graph<T>& g, const tc::ParameterSet<T>& params, tc::Var<T> latents) const {
  if (latents.rows() == 0) throw ConfigError("attention_pool: needs at least one latent");
  return tc::scaled_dot_attention(g.parameter(params, query_), key_(g, params, latents), value_(g, params, latents), 1);
}

// ---- EMA ------------------------------------------------------------------

template <typename T>
void ema_update(tc::ParameterSet<T>& target, const tc::ParameterSet<T>& context, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("ema: tau must be in [0, 1]");
  const T keep = T(tau);
  const T mix = T(1) - keep;
  for (auto& p : target) {
    const auto& src = context.get(p.name).value;
    if (src.shape() != p.value.shape()) throw ConfigError("ema: shape mismatch for '" + p.name + "'");
    auto& dst = p.value.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = keep * dst[i] + mix * src[i];
  }
}

template tc::Tensor<float> position_features(std::span<const Point3>, const EncoderConfig&);
template tc::Tensor<double> position_features(std::span<const Point3>, const EncoderConfig&);
template class TransformerBlock<float>;
template class TransformerBlock<double>;
template class PointEncoder<float>;
template class PointEncoder<double>;
template class Predictor<float>;
template class Predictor<double>;
template class AttentionPool<float>;
template class AttentionPool<double>;
template void ema_update(tc::ParameterSet<float>&, const tc::ParameterSet<float>&, double);
template void ema_update(tc::ParameterSet<double>&, const tc::ParameterSet<double>&, double);

}  // namespace jepagrasp
