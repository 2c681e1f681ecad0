#pragma once

// Orders patch centers into a spatially coherent sequence and samples
// context/target block masks over that order.

#include <cstddef>
#include <span>
#include <vector>

#include "jepagrasp/pointops.hpp"
#include "jepagrasp/random.hpp"

namespace jepagrasp {

// Greedy nearest-neighbour chain from the largest-norm center. Ties go to the
// lowest index at every step.
std::vector<std::size_t> sequence_centers(std::span<const Point3> centers);

struct MaskConfig {
  std::size_t num_targets = 4;
  double target_scale_min = 0.15;
  double target_scale_max = 0.25;
  double context_scale_min = 0.85;
  double context_scale_max = 1.0;
  std::size_t max_retries = 100;

  // Smallest token count a plan can be drawn for: every target needs a
  // token and the context keeps at least one.
  std::size_t min_tokens() const { return num_targets + 1; }
  void validate() const;
};

struct TargetBlock {
  std::size_t start = 0;
  std::size_t length = 0;

  bool operator==(const TargetBlock&) const = default;
};

struct MaskPlan {
  std::vector<TargetBlock> target_blocks;   // disjoint, in draw order
  std::vector<std::size_t> context_indices;  // sorted, disjoint from targets

  // Concatenated token indices of every block, in block order.
  std::vector<std::size_t> target_indices() const;
  std::size_t target_token_count() const;

  bool operator==(const MaskPlan&) const = default;
};

// Window length for a drawn scale: round(scale * G), at least 1.
std::size_t window_length(double scale, std::size_t num_tokens);

// Draws num_targets windows with independently sampled lengths and a uniformly
// random disjoint placement, keeping at least one context token. When the
// lengths do not fit, they are redrawn up to max_retries times; after that the
// newest window is shrunk until the plan fits. Throws MaskError when no
// placement exists.
MaskPlan sample_mask(std::size_t num_tokens, const MaskConfig& cfg, Rng& rng);

}  // namespace jepagrasp
