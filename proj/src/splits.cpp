#include "jepagrasp/splits.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "jepagrasp/error.hpp"
#include "jepagrasp/random.hpp"

namespace jepagrasp {

namespace {

std::size_t round_half_up_percent(std::size_t n, std::size_t percent) { return (n * percent + 50) / 100; }

}  // namespace

bool is_budget(int p) { return std::find(kBudgets.begin(), kBudgets.end(), p) != kBudgets.end(); }

const std::vector<std::string>& SplitPack::budget(int p) const {
  auto it = budgets.find(p);
  if (it == budgets.end()) throw ConfigError("pack '" + pack_id + "' has no budget " + std::to_string(p));
  return it->second;
}

std::vector<std::size_t> eval_quotas(const DatasetManifest& manifest) {
  const auto& cats = manifest.categories;
  std::vector<std::size_t> q(cats.size());
  std::size_t total = 0, assigned = 0;
  for (std::size_t c = 0; c < cats.size(); ++c) {
    if (cats[c].objects < 3) {
      throw ConfigError("category '" + cats[c].name + "' has " + std::to_string(cats[c].objects) +
                        " objects; at least 3 are needed for val/test/train");
    }
    q[c] = round_half_up_percent(cats[c].objects, 10);
    total += cats[c].objects;
    assigned += q[c];
  }
  const std::size_t target = round_half_up_percent(total, 10);

  // Largest categories first, lowest index on ties.
  std::vector<std::size_t> order(cats.size());
  for (std::size_t c = 0; c < order.size(); ++c) order[c] = c;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return cats[a].objects > cats[b].objects; });
  while (assigned != target) {
    bool moved = false;
    for (std::size_t c : order) {
      if (assigned < target && cats[c].objects >= 2 * (q[c] + 1) + 1) {
        ++q[c];
        ++assigned;
        moved = true;
        break;
      }
      if (assigned > target && q[c] > 0) {
        --q[c];
        --assigned;
        moved = true;
        break;
      }
    }
    if (!moved) throw ConfigError("cannot place 10% of objects in val/test while keeping a training object per category");
  }
  return q;
}

SplitPack make_pack(const DatasetManifest& manifest, const std::string& pack_id, std::uint64_t seed) {
  if (pack_id.empty()) throw ConfigError("pack id must be non-empty");
  const auto quotas = eval_quotas(manifest);
  SplitPack pack;
  pack.pack_id = pack_id;
  pack.seed = seed;
  for (int p : kBudgets) pack.budgets[p];
  const std::uint64_t base = seed ^ hash_string(pack_id);
  for (std::size_t c = 0; c < manifest.categories.size(); ++c) {
    const int cat = manifest.categories[c].category_id;
    std::vector<std::string> ids;
    for (const auto& o : manifest.objects) {
      if (o.category_id == cat) ids.push_back(o.object_id);
    }
    std::sort(ids.begin(), ids.end());
    Rng rng = Rng::derive(base, std::uint64_t(cat));
    rng.shuffle(ids);
    const std::size_t q = quotas[c];
    pack.val.insert(pack.val.end(), ids.begin(), ids.begin() + std::ptrdiff_t(q));
    pack.test.insert(pack.test.end(), ids.begin() + std::ptrdiff_t(q), ids.begin() + std::ptrdiff_t(2 * q));
    const std::vector<std::string> train(ids.begin() + std::ptrdiff_t(2 * q), ids.end());
    for (int p : kBudgets) {
      const std::size_t take = std::max<std::size_t>(1, round_half_up_percent(train.size(), std::size_t(p)));
      auto& b = pack.budgets[p];
      b.insert(b.end(), train.begin(), train.begin() + std::ptrdiff_t(take));
    }
  }
  std::sort(pack.val.begin(), pack.val.end());
  std::sort(pack.test.begin(), pack.test.end());
  for (auto& [p, ids] : pack.budgets) std::sort(ids.begin(), ids.end());
  return pack;
}

std::vector<PackViolation> verify_pack(const SplitPack& pack, const DatasetManifest& manifest,
                                       std::span<const GraspSample> samples) {
  std::vector<PackViolation> out;
  auto report = [&](std::string kind, std::string detail) { out.push_back({std::move(kind), std::move(detail)}); };

  std::map<std::string, int> category_of;
  for (const auto& o : manifest.objects) category_of[o.object_id] = o.category_id;

  auto check_list = [&](const std::string& label, const std::vector<std::string>& ids) {
    std::set<std::string> seen;
    for (const auto& id : ids) {
      if (!category_of.count(id)) report("unknown_object", label + " lists unknown object '" + id + "'");
      if (!seen.insert(id).second) report("duplicate", label + " lists '" + id + "' more than once");
    }
    return seen;
  };
  const auto val = check_list("val", pack.val);
  const auto test = check_list("test", pack.test);
  std::map<int, std::set<std::string>> budgets;
  for (int p : kBudgets) {
    auto it = pack.budgets.find(p);
    if (it == pack.budgets.end()) {
      report("coverage", "budget " + std::to_string(p) + " is missing");
      continue;
    }
    budgets[p] = check_list("budget " + std::to_string(p), it->second);
  }
  for (const auto& [p, ids] : pack.budgets) {
    if (!is_budget(p)) report("coverage", "unexpected budget " + std::to_string(p));
  }

  // Object-level disjointness, one violation per offending object.
  for (const auto& id : val) {
    if (test.count(id)) report("disjointness", "'" + id + "' is in both val and test");
  }
  for (const auto* eval : {&val, &test}) {
    const std::string label = eval == &val ? "val" : "test";
    for (const auto& id : *eval) {
      std::string hits;
      for (const auto& [p, ids] : budgets) {
        if (ids.count(id)) hits += (hits.empty() ? "" : ",") + std::to_string(p);
      }
      if (!hits.empty()) report("disjointness", "'" + id + "' is in " + label + " and train budgets {" + hits + "}");
    }
  }

  for (std::size_t i = 0; i + 1 < kBudgets.size(); ++i) {
    const int small = kBudgets[i], large = kBudgets[i + 1];
    if (!budgets.count(small) || !budgets.count(large)) continue;
    for (const auto& id : budgets[small]) {
      if (!budgets[large].count(id)) {
        report("nesting", "'" + id + "' is in budget " + std::to_string(small) + " but not in " + std::to_string(large));
      }
    }
  }

  for (const auto& [p, ids] : budgets) {
    std::set<int> present;
    for (const auto& id : ids) {
      if (auto it = category_of.find(id); it != category_of.end()) present.insert(it->second);
    }
    for (const auto& c : manifest.categories) {
      if (!present.count(c.category_id)) {
        report("stratification", "budget " + std::to_string(p) + " has no object of category '" + c.name + "'");
      }
    }
  }

  try {
    const auto quotas = eval_quotas(manifest);
    for (std::size_t c = 0; c < manifest.categories.size(); ++c) {
      const int cat = manifest.categories[c].category_id;
      for (const auto* eval : {&val, &test}) {
        std::size_t n = 0;
        for (const auto& id : *eval) {
          if (auto it = category_of.find(id); it != category_of.end() && it->second == cat) ++n;
        }
        if (n != quotas[c]) {
          report("stratification", std::string(eval == &val ? "val" : "test") + " holds " + std::to_string(n) +
                                       " objects of category '" + manifest.categories[c].name + "', expected " +
                                       std::to_string(quotas[c]));
        }
      }
    }
  } catch (const ConfigError& e) {
    report("stratification", e.what());
  }

  const std::size_t expected = round_half_up_percent(manifest.objects.size(), 10);
  if (pack.val.size() != expected) {
    report("size", "|val| = " + std::to_string(pack.val.size()) + ", expected " + std::to_string(expected));
  }
  if (pack.test.size() != expected) {
    report("size", "|test| = " + std::to_string(pack.test.size()) + ", expected " + std::to_string(expected));
  }

  if (budgets.count(100)) {
    for (const auto& o : manifest.objects) {
      if (!val.count(o.object_id) && !test.count(o.object_id) && !budgets[100].count(o.object_id)) {
        report("coverage", "'" + o.object_id + "' is not assigned to any split");
      }
    }
  }

  if (!samples.empty()) {
    std::set<std::string> train;
    for (const auto& [p, ids] : budgets) train.insert(ids.begin(), ids.end());
    auto key = [](const GraspSample& s) {
      std::ostringstream k;
      k.precision(17);
      for (double v : s.pose.params()) k << v << ',';
      for (double v : s.joints) k << v << ',';
      return k.str();
    };
    std::map<std::string, std::string> eval_keys;
    for (const auto& s : samples) {
      if (val.count(s.object_id) || test.count(s.object_id)) eval_keys.emplace(key(s), s.object_id);
    }
    for (const auto& s : samples) {
      if (!train.count(s.object_id)) continue;
      if (auto it = eval_keys.find(key(s)); it != eval_keys.end()) {
        report("leakage", "a grasp of training object '" + s.object_id + "' duplicates one of '" + it->second + "'");
      }
    }
  }
  return out;
}

std::string SplitPack::to_json() const {
  nlohmann::ordered_json j;
  j["pack_id"] = pack_id;
  j["seed"] = seed;
  j["val"] = val;
  j["test"] = test;
  nlohmann::ordered_json b = nlohmann::ordered_json::object();
  for (int p : kBudgets) {
    if (auto it = budgets.find(p); it != budgets.end()) b[std::to_string(p)] = it->second;
  }
  j["budgets"] = b;
  return j.dump(2) + "\n";
}

SplitPack SplitPack::from_json(const std::string& text, const std::string& origin) {
  SplitPack pack;
  try {
    const auto j = nlohmann::json::parse(text);
    pack.pack_id = j.at("pack_id").get<std::string>();
    pack.seed = j.at("seed").get<std::uint64_t>();
    pack.val = j.at("val").get<std::vector<std::string>>();
    pack.test = j.at("test").get<std::vector<std::string>>();
    for (const auto& [key, ids] : j.at("budgets").items()) {
      int p = 0;
      try {
        std::size_t used = 0;
        p = std::stoi(key, &used);
        if (used != key.size()) throw std::invalid_argument(key);
      } catch (const std::exception&) {
        throw IoError(origin + ": bad budget key '" + key + "'");
      }
      pack.budgets[p] = ids.get<std::vector<std::string>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(origin + ": malformed pack: " + e.what());
  }
  return pack;
}

std::string pack_file_name(const std::string& pack_id) { return "pack_" + pack_id + ".json"; }

void write_pack(const std::string& path, const SplitPack& pack, bool overwrite) {
  if (std::filesystem::exists(path) && !overwrite) throw IoError(path + ": already exists (pass --overwrite)");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << pack.to_json();
  out.flush();
  if (!out) throw IoError(path + ": write failed");
}

SplitPack read_pack(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return SplitPack::from_json(ss.str(), path);
}

}  // namespace jepagrasp
