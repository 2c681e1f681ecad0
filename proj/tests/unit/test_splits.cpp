#include <doctest.h>

#include <algorithm>
#include <set>

#include "jepagrasp/datasets.hpp"
#include "jepagrasp/splits.hpp"
#include "util.hpp"

using namespace jepagrasp;

namespace {

DatasetManifest manifest_with(std::vector<std::size_t> sizes) {
  DatasetManifest m;
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    m.categories.push_back({int(c), "cat" + std::to_string(c), sizes[c]});
    for (std::size_t i = 0; i < sizes[c]; ++i) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "cat%zu_%03zu", c, i);
      m.objects.push_back({buf, int(c), std::string("clouds/") + buf + ".bin"});
    }
  }
  std::sort(m.objects.begin(), m.objects.end(), [](const auto& a, const auto& b) { return a.object_id < b.object_id; });
  return m;
}

std::size_t count_kind(const std::vector<PackViolation>& v, const std::string& kind) {
  return std::size_t(std::count_if(v.begin(), v.end(), [&](const PackViolation& x) { return x.kind == kind; }));
}

}  // namespace

TEST_CASE("five categories of twenty objects") {
  const auto m = manifest_with({20, 20, 20, 20, 20});
  const SplitPack p = make_pack(m, "A", 0);
  CHECK(p.val.size() == 10);
  CHECK(p.test.size() == 10);
  CHECK(p.budget(100).size() == 80);
  CHECK(p.budget(25).size() == 20);
  CHECK(p.budget(10).size() == 10);
  CHECK(p.budget(1).size() == 5);  // one per category
  CHECK(verify_pack(p, m).empty());

  for (int b : {1, 10, 25}) {
    const auto& small = p.budget(b);
    const auto& full = p.budget(100);
    CHECK(std::includes(full.begin(), full.end(), small.begin(), small.end()));
  }
  CHECK_THROWS_AS(p.budget(50), ConfigError);
}

TEST_CASE("one percent of sixteen training objects rounds up to one") {
  const auto m = manifest_with({20});
  const SplitPack p = make_pack(m, "A", 3);
  CHECK(p.budget(100).size() == 16);
  CHECK(p.budget(1).size() == 1);
  CHECK(p.budget(10).size() == 2);
  CHECK(p.budget(25).size() == 4);
}

TEST_CASE("packs are deterministic and differ between ids") {
  const auto m = manifest_with({20, 13, 7, 31});
  const SplitPack a1 = make_pack(m, "A", 0), a2 = make_pack(m, "A", 0), b = make_pack(m, "B", 0);
  CHECK(a1.to_json() == a2.to_json());
  CHECK(a1.val != b.val);
  CHECK(a1.val.size() == b.val.size());
  for (int p : kBudgets) CHECK(a1.budget(p).size() == b.budget(p).size());
  CHECK(verify_pack(b, m).empty());
  CHECK(make_pack(m, "A", 1).to_json() != a1.to_json());
}

TEST_CASE("eval quotas sum to ten percent of all objects") {
  for (const auto& sizes : std::vector<std::vector<std::size_t>>{{5, 5, 5}, {3, 3, 3, 3, 3}, {42, 3}, {15, 25, 35}}) {
    const auto m = manifest_with(sizes);
    const auto q = eval_quotas(m);
    std::size_t total = 0, sum = 0;
    for (std::size_t c = 0; c < sizes.size(); ++c) {
      total += sizes[c];
      sum += q[c];
      CHECK(2 * q[c] < sizes[c]);
    }
    CHECK(sum == (total + 5) / 10);
    CHECK(verify_pack(make_pack(m, "Z", 0), m).empty());
  }
}

TEST_CASE("categories with fewer than three objects are refused") {
  const auto m = manifest_with({20, 2});
  try {
    make_pack(m, "A", 0);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("cat1") != std::string::npos);
  }
  CHECK_THROWS_AS(make_pack(manifest_with({5}), "", 0), ConfigError);
}

TEST_CASE("fault injection is caught") {
  const auto m = manifest_with({20, 20, 20, 20, 20});
  SplitPack p = make_pack(m, "A", 0);
  const std::string moved = p.val.front();
  p.budgets[100].push_back(moved);
  std::sort(p.budgets[100].begin(), p.budgets[100].end());
  const auto v = verify_pack(p, m);
  CHECK(count_kind(v, "disjointness") == 1);
  CHECK_FALSE(v.empty());

  SplitPack q = make_pack(m, "A", 0);
  // Swap a val object for a training object of another category.
  const std::string train_obj = q.budget(100).back();
  const std::string val_obj = q.val.front();
  REQUIRE(train_obj.substr(0, 4) != val_obj.substr(0, 4));
  std::replace(q.val.begin(), q.val.end(), val_obj, train_obj);
  for (auto& [b, ids] : q.budgets) std::replace(ids.begin(), ids.end(), train_obj, val_obj);
  std::sort(q.val.begin(), q.val.end());
  for (auto& [b, ids] : q.budgets) std::sort(ids.begin(), ids.end());
  CHECK(count_kind(verify_pack(q, m), "stratification") >= 1);

  SplitPack s = make_pack(m, "A", 0);
  auto& one = s.budgets[1];
  one.erase(std::remove_if(one.begin(), one.end(), [](const std::string& id) { return id.rfind("cat2_", 0) == 0; }),
            one.end());
  const auto sv = verify_pack(s, m);
  CHECK(count_kind(sv, "stratification") == 1);
  CHECK(count_kind(sv, "nesting") == 0);

  SplitPack r = make_pack(m, "A", 0);
  r.budgets[10].push_back("ghost");
  CHECK(count_kind(verify_pack(r, m), "unknown_object") >= 1);
}

TEST_CASE("leakage: duplicated grasp across train and test") {
  DatasetConfig cfg;
  cfg.num_categories = 2;
  cfg.objects_per_category = 10;
  cfg.samples_per_object = 3;
  cfg.cloud_size = 64;
  Dataset ds = synthesize_dataset(cfg);
  const SplitPack p = make_pack(ds.manifest, "A", 0);
  CHECK(verify_pack(p, ds.manifest, ds.samples).empty());
  const std::string test_obj = p.test.front(), train_obj = p.budget(100).front();
  GraspSample copy;
  for (const auto& s : ds.samples)
    if (s.object_id == test_obj) copy = s;
  copy.object_id = train_obj;
  ds.samples.push_back(copy);
  CHECK(count_kind(verify_pack(p, ds.manifest, ds.samples), "leakage") == 1);
}

TEST_CASE("pack json round trip and write refusal") {
  const auto m = manifest_with({9, 14, 22});
  const SplitPack p = make_pack(m, "B", 11);
  const SplitPack back = SplitPack::from_json(p.to_json(), "mem");
  CHECK(back.to_json() == p.to_json());
  CHECK(back.val == p.val);
  CHECK(back.seed == 11);

  testutil::TempDir dir("splits");
  const std::string path = dir / pack_file_name("B");
  write_pack(path, p);
  const std::string first = testutil::slurp(path);
  CHECK(first.back() == '\n');
  CHECK_THROWS_AS(write_pack(path, p), IoError);
  write_pack(path, read_pack(path), true);
  CHECK(testutil::slurp(path) == first);
  CHECK_THROWS_AS(SplitPack::from_json("{", "mem"), IoError);
  CHECK_THROWS_AS(read_pack(dir / "absent.json"), IoError);
}
