#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "jepagrasp/random.hpp"
#include "jepagrasp/sequencing.hpp"

using namespace jepagrasp;

namespace {

double d2(const Point3& a, const Point3& b) {
  double s = 0.0;
  for (int k = 0; k < 3; ++k) s += (double(a[k]) - b[k]) * (double(a[k]) - b[k]);
  return s;
}

}  // namespace

TEST_CASE("sequencer examples") {
  const std::vector<Point3> line{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}};
  CHECK(sequence_centers(line) == std::vector<std::size_t>{3, 2, 1, 0});
  const std::vector<Point3> one{{0.3f, 0, 0}};
  CHECK(sequence_centers(one) == std::vector<std::size_t>{0});
}

TEST_CASE("sequencer is a permutation and greedy at every step") {
  Rng rng(8);
  for (int t = 0; t < 500; ++t) {
    std::vector<Point3> c;
    const std::size_t n = 1 + rng.below(20);
    for (std::size_t i = 0; i < n; ++i)
      c.push_back({float(rng.uniform(-1, 1)), float(rng.uniform(-1, 1)), float(rng.uniform(-1, 1))});
    const auto order = sequence_centers(c);
    auto sorted = order;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> iota(n);
    std::iota(iota.begin(), iota.end(), 0);
    REQUIRE(sorted == iota);
    for (std::size_t s = 0; s + 1 < n; ++s) {
      const double step = d2(c[order[s]], c[order[s + 1]]);
      for (std::size_t r = s + 1; r < n; ++r) CHECK(step <= d2(c[order[s]], c[order[r]]));
    }
  }
}

TEST_CASE("single target window example") {
  MaskConfig cfg;
  cfg.num_targets = 1;
  cfg.target_scale_min = cfg.target_scale_max = 0.25;
  cfg.context_scale_min = cfg.context_scale_max = 1.0;
  Rng rng(1);
  const MaskPlan p = sample_mask(64, cfg, rng);
  REQUIRE(p.target_blocks.size() == 1);
  CHECK(p.target_blocks[0].length == 16);
  CHECK(p.context_indices.size() == 48);
}

TEST_CASE("zero targets leaves the full context") {
  MaskConfig cfg;
  cfg.num_targets = 0;
  cfg.context_scale_min = cfg.context_scale_max = 1.0;
  Rng rng(1);
  const MaskPlan p = sample_mask(10, cfg, rng);
  CHECK(p.target_blocks.empty());
  CHECK(p.context_indices.size() == 10);
}

TEST_CASE("mask invariants over 1e5 draws") {
  MaskConfig cfg;
  Rng rng(99);
  std::size_t bad = 0;
  for (int t = 0; t < 100000; ++t) {
    const std::size_t g = cfg.min_tokens() + rng.below(80);
    const MaskPlan p = sample_mask(g, cfg, rng);
    std::vector<int> owner(g, -1);
    if (p.target_blocks.size() != cfg.num_targets) ++bad;
    for (std::size_t b = 0; b < p.target_blocks.size(); ++b) {
      const auto& blk = p.target_blocks[b];
      if (blk.length == 0 || blk.start + blk.length > g) {
        ++bad;
        continue;
      }
      for (std::size_t i = blk.start; i < blk.start + blk.length; ++i) {
        if (owner[i] != -1) ++bad;
        owner[i] = int(b);
      }
    }
    if (p.context_indices.empty() || !std::is_sorted(p.context_indices.begin(), p.context_indices.end())) ++bad;
    for (auto c : p.context_indices)
      if (c >= g || owner[c] != -1) ++bad;
    if (std::adjacent_find(p.context_indices.begin(), p.context_indices.end()) != p.context_indices.end()) ++bad;
  }
  CHECK(bad == 0);
}

TEST_CASE("mean target coverage matches the analytic expectation") {
  MaskConfig cfg;
  cfg.context_scale_min = cfg.context_scale_max = 1.0;
  // E[round(U * 64)] for U ~ uniform(0.15, 0.25), by fine quadrature.
  double expected_len = 0.0;
  const int steps = 200000;
  for (int i = 0; i < steps; ++i) {
    const double u = cfg.target_scale_min + (cfg.target_scale_max - cfg.target_scale_min) * (i + 0.5) / steps;
    expected_len += double(window_length(u, 64)) / steps;
  }
  const double expected = cfg.num_targets * expected_len / 64.0;
  Rng rng(5);
  double mean = 0.0;
  for (int t = 0; t < 10000; ++t) mean += double(sample_mask(64, cfg, rng).target_token_count()) / 64.0 / 10000.0;
  CHECK(std::abs(mean - expected) <= 0.02 * expected);
}

TEST_CASE("same seed gives the same plan; infeasible requests raise MaskError") {
  MaskConfig cfg;
  Rng a(42), b(42);
  for (int t = 0; t < 100; ++t) CHECK(sample_mask(64, cfg, a) == sample_mask(64, cfg, b));
  Rng r(1);
  CHECK_THROWS_AS(sample_mask(4, cfg, r), MaskError);
  // Oversized windows shrink until they fit with one context token left.
  MaskConfig wide = cfg;
  wide.target_scale_min = wide.target_scale_max = 1.0;
  wide.max_retries = 3;
  const MaskPlan p = sample_mask(8, wide, r);
  CHECK(p.target_token_count() == 7);
  CHECK(p.context_indices.size() == 1);
  MaskConfig invalid = cfg;
  invalid.target_scale_min = 0.5;
  invalid.target_scale_max = 0.2;
  CHECK_THROWS_AS(sample_mask(64, invalid, r), ConfigError);
}
