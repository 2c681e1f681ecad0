#pragma once

// Object-level, category-stratified split packs: fixed val/test sets and
// nested training budgets (1, 10, 25, 100 percent of the training pool).

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "jepagrasp/datasets.hpp"

namespace jepagrasp {

inline constexpr std::array<int, 4> kBudgets{1, 10, 25, 100};

bool is_budget(int p);

struct SplitPack {
  std::string pack_id;
  std::uint64_t seed = 0;
  std::vector<std::string> val;
  std::vector<std::string> test;
  std::map<int, std::vector<std::string>> budgets;  // sorted id lists

  const std::vector<std::string>& budget(int p) const;  // ConfigError if absent

  // Canonical form: fixed key order, sorted lists, trailing newline.
  std::string to_json() const;
  static SplitPack from_json(const std::string& text, const std::string& origin);
};

// Per-category evaluation quota: round-half-up of 10%, then the global total
// is forced to round-half-up(10% of all objects) by adjusting the largest
// categories first. Index i matches manifest.categories[i].
std::vector<std::size_t> eval_quotas(const DatasetManifest& manifest);

// Throws ConfigError naming the category when it has fewer than 3 objects.
SplitPack make_pack(const DatasetManifest& manifest, const std::string& pack_id, std::uint64_t seed);

struct PackViolation {
  std::string kind;  // disjointness, nesting, stratification, size, coverage, unknown_object, duplicate, leakage
  std::string detail;
};

// Checks every pack invariant. When samples are supplied, also reports any
// training-budget grasp whose pose and joints duplicate a val/test grasp.
std::vector<PackViolation> verify_pack(const SplitPack& pack, const DatasetManifest& manifest,
                                       std::span<const GraspSample> samples = {});

std::string pack_file_name(const std::string& pack_id);
void write_pack(const std::string& path, const SplitPack& pack, bool overwrite = false);
SplitPack read_pack(const std::string& path);

}  // namespace jepagrasp
