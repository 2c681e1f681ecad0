#include "jepagrasp/sequencing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "jepagrasp/error.hpp"

namespace jepagrasp {

std::vector<std::size_t> sequence_centers(std::span<const Point3> centers) {
  const std::size_t n = centers.size();
  if (n == 0) throw ConfigError("sequence_centers: no centers");
  auto dist2 = [&](std::size_t a, std::size_t b) {
    double s = 0.0;
    for (int d = 0; d < 3; ++d) {
      const double diff = double(centers[a][d]) - centers[b][d];
      s += diff * diff;
    }
    return s;
  };
  std::vector<std::size_t> order{extreme_point(centers)};
  order.reserve(n);
  std::vector<bool> visited(n, false);
  visited[order.front()] = true;
  while (order.size() < n) {
    const std::size_t cur = order.back();
    std::size_t best = n;
    double best_d = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (visited[i]) continue;
      const double d = dist2(cur, i);
      if (best == n || d < best_d) {
        best = i;
        best_d = d;
      }
    }
    visited[best] = true;
    order.push_back(best);
  }
  return order;
}

void MaskConfig::validate() const {
  auto in_unit = [](double x) { return x > 0.0 && x < 1.0 + 1e-12; };
  if (num_targets > 0 && (!in_unit(target_scale_min) || !in_unit(target_scale_max) ||
                          target_scale_min > target_scale_max)) {
    throw ConfigError("mask: target_scale must satisfy 0 < min <= max <= 1");
  }
  if (!in_unit(context_scale_min) || !in_unit(context_scale_max) || context_scale_min > context_scale_max) {
    throw ConfigError("mask: context_scale must satisfy 0 < min <= max <= 1");
  }
  if (max_retries == 0) throw ConfigError("mask: max_retries must be >= 1");
}

std::vector<std::size_t> MaskPlan::target_indices() const {
  std::vector<std::size_t> out;
  for (const auto& b : target_blocks)
    for (std::size_t i = 0; i < b.length; ++i) out.push_back(b.start + i);
  return out;
}

std::size_t MaskPlan::target_token_count() const {
  std::size_t n = 0;
  for (const auto& b : target_blocks) n += b.length;
  return n;
}

std::size_t window_length(double scale, std::size_t num_tokens) {
  return std::max<std::size_t>(1, std::size_t(std::llround(scale * double(num_tokens))));
}

MaskPlan sample_mask(std::size_t num_tokens, const MaskConfig& cfg, Rng& rng) {
  cfg.validate();
  if (num_tokens < cfg.min_tokens()) {
    throw MaskError("cannot place " + std::to_string(cfg.num_targets) + " target windows in " +
                    std::to_string(num_tokens) + " tokens");
  }
  const std::size_t n = cfg.num_targets;
  const std::size_t budget = num_tokens - 1;  // keep one context token

  std::vector<std::size_t> lengths(n);
  bool fits = false;
  for (std::size_t attempt = 0; attempt < cfg.max_retries && !fits; ++attempt) {
    for (auto& len : lengths) len = window_length(rng.uniform(cfg.target_scale_min, cfg.target_scale_max), num_tokens);
    fits = std::accumulate(lengths.begin(), lengths.end(), std::size_t{0}) <= budget;
  }
  if (!fits) {
    // shrink newest windows first
    std::size_t total = std::accumulate(lengths.begin(), lengths.end(), std::size_t{0});
    for (std::size_t i = n; i-- > 0 && total > budget;) {
      const std::size_t cut = std::min(lengths[i] - 1, total - budget);
      lengths[i] -= cut;
      total -= cut;
    }
  }

  // Uniform disjoint placement: random window order along the sequence and a
  // uniformly random composition of the free tokens into n+1 gaps.
  const std::size_t free_tokens = num_tokens - std::accumulate(lengths.begin(), lengths.end(), std::size_t{0});
  std::vector<std::size_t> slots(free_tokens + n);
  std::iota(slots.begin(), slots.end(), std::size_t{0});
  for (std::size_t i = 0; i < n; ++i) std::swap(slots[i], slots[i + rng.below(slots.size() - i)]);
  std::vector<bool> is_window(free_tokens + n, false);
  for (std::size_t i = 0; i < n; ++i) is_window[slots[i]] = true;
  std::vector<std::size_t> window_order(n);
  std::iota(window_order.begin(), window_order.end(), std::size_t{0});
  rng.shuffle(window_order);

  MaskPlan plan;
  plan.target_blocks.resize(n);
  std::vector<bool> covered(num_tokens, false);
  std::size_t pos = 0, next_window = 0;
  for (bool window : is_window) {
    if (!window) {
      ++pos;
      continue;
    }
    const std::size_t w = window_order[next_window++];
    plan.target_blocks[w] = TargetBlock{pos, lengths[w]};
    for (std::size_t i = 0; i < lengths[w]; ++i) covered[pos + i] = true;
    pos += lengths[w];
  }

  std::vector<std::size_t> complement;
  for (std::size_t i = 0; i < num_tokens; ++i) {
    if (!covered[i]) complement.push_back(i);
  }
  const double keep_scale = rng.uniform(cfg.context_scale_min, cfg.context_scale_max);
  std::size_t keep = std::size_t(std::llround(keep_scale * double(complement.size())));
  keep = std::clamp<std::size_t>(keep, 1, complement.size());
  if (keep < complement.size()) {
    for (std::size_t i = 0; i < keep; ++i) std::swap(complement[i], complement[i + rng.below(complement.size() - i)]);
    complement.resize(keep);
    std::sort(complement.begin(), complement.end());
  }
  plan.context_indices = std::move(complement);
  return plan;
}

}  // namespace jepagrasp
