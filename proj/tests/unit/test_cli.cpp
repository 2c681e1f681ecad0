#include <doctest.h>

#include <filesystem>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "jepagrasp/cli.hpp"
#include "util.hpp"

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::initializer_list<std::string> args) {
  std::vector<std::string> owned{"jepagrasp"};
  owned.insert(owned.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : owned) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = jepagrasp::run_cli(int(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

const char* kTinyConfig = R"(data.num_categories = 2
data.objects_per_category = 10
data.samples_per_object = 6
data.cloud_size = 128
tokenizer.num_groups = 8
tokenizer.group_size = 8
tokenizer.radius = 0.3
tokenizer.hidden_dim = 8
encoder.embed_dim = 16
encoder.depth = 1
encoder.heads = 2
predictor.depth = 1
predictor.heads = 2
head.hidden_dim = 16
head.k = 2
pretrain.steps = 4
pretrain.batch_size = 2
finetune.steps = 5
finetune.batch_objects = 2
finetune.samples_per_object = 2
)";

double csv_field(const std::string& text, const std::string& column) {
  std::istringstream in(text);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  std::istringstream hs(header), rs(row);
  std::string h, v;
  while (std::getline(hs, h, ',') && std::getline(rs, v, ','))
    if (h == column) return std::stod(v);
  FAIL("missing column " << column);
  return 0.0;
}

}  // namespace

TEST_CASE("exit codes for argument and input errors") {
  CHECK(run({}).code == 2);
  CHECK(run({"bogus"}).code == 2);
  CHECK(run({"gen-data", "--no-such-flag"}).code == 2);
  CHECK(run({"--help"}).code == 0);
  CHECK(run({"config-schema"}).code == 0);
  CHECK(run({"config-schema"}).out.find("finetune.lr_head") != std::string::npos);

  testutil::TempDir dir("cli_codes");
  const auto missing = run({"make-splits", "--pack", "A", "--data-root", dir / "nothing"});
  CHECK(missing.code == 3);
  CHECK(missing.err.find("error: ") != std::string::npos);
  CHECK(run({"finetune", "--pack", "A", "--budget", "50", "--data-root", dir.str()}).code == 2);
  CHECK(run({"finetune", "--pack", "A", "--init", "warm", "--data-root", dir.str()}).code == 2);
  CHECK(run({"gen-data", "--set", "no.such.key=1", "--data-root", dir.str()}).code == 2);
  CHECK(run({"gen-data", "--config", dir / "absent.conf"}).code == 3);
}

TEST_CASE("gradcheck passes from the command line") {
  const auto r = run({"gradcheck", "--points", "1"});
  CHECK(r.code == 0);
  CHECK(r.out.find("FAIL") == std::string::npos);
}

TEST_CASE("tiny end-to-end pipeline") {
  testutil::TempDir dir("cli_e2e");
  testutil::spit(dir / "tiny.conf", kTinyConfig);
  const std::string conf = dir / "tiny.conf", data = dir / "data", runs = dir / "runs";
  auto common = [&](std::initializer_list<std::string> extra) {
    std::vector<std::string> v{"--config", conf, "--data-root", data, "--output-dir", runs};
    v.insert(v.end(), extra.begin(), extra.end());
    return v;
  };
  auto call = [&](const std::string& sub, std::initializer_list<std::string> extra) {
    std::vector<std::string> owned{"jepagrasp", sub};
    for (auto& s : common(extra)) owned.push_back(s);
    std::vector<const char*> argv;
    for (const auto& a : owned) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = jepagrasp::run_cli(int(argv.size()), argv.data(), out, err);
    return Result{code, out.str(), err.str()};
  };

  REQUIRE(call("gen-data", {}).code == 0);
  CHECK(call("gen-data", {}).code == 3);  // refuses to overwrite
  REQUIRE(call("make-splits", {"--pack", "A"}).code == 0);
  const std::string pack = testutil::slurp(dir / "data/pack_A.json");
  CHECK(call("make-splits", {"--pack", "A", "--overwrite"}).code == 0);
  CHECK(testutil::slurp(dir / "data/pack_A.json") == pack);

  const auto pre = call("pretrain", {"--pack", "A"});
  REQUIRE_MESSAGE(pre.code == 0, pre.err);
  CHECK(pre.err.find("# pretrain") != std::string::npos);
  const std::string ckpt = dir / "runs/pretrain/A_s0/backbone.ckpt";
  CHECK(std::filesystem::exists(ckpt));

  const auto fine = call("finetune", {"--pack", "A", "--budget", "25", "--init", "pretrained:" + ckpt});
  REQUIRE_MESSAGE(fine.code == 0, fine.err);
  const std::string run_dir = dir / "runs/finetune/A_b25_pretrained_s0";
  for (const char* f : {"model.ckpt", "metrics.csv", "config.txt", "summary.csv"})
    CHECK(std::filesystem::exists(run_dir + "/" + f));

  const auto ev = call("eval", {"--run", run_dir, "--split", "test"});
  REQUIRE_MESSAGE(ev.code == 0, ev.err);
  CHECK(csv_field(testutil::slurp(run_dir + "/eval_test.csv"), "selection_gap") >= -1e-12);

  REQUIRE(call("finetune", {"--pack", "A", "--budget", "10", "--k", "1"}).code == 0);
  const std::string k1 = dir / "runs/finetune/A_b10_scratch_s0";
  REQUIRE(call("eval", {"--run", k1}).code == 0);
  CHECK(csv_field(testutil::slurp(k1 + "/eval_val.csv"), "selection_gap") == 0.0);

  const auto curves = call("export-curves", {});
  REQUIRE_MESSAGE(curves.code == 0, curves.err);
  const std::string csv = testutil::slurp(dir / "runs/curves.csv");
  CHECK(csv.find("10,scratch,0,") != std::string::npos);
  CHECK(csv.find("25,pretrained,0,") != std::string::npos);

  CHECK(call("eval", {"--run", dir / "runs/finetune/none"}).code == 3);
  CHECK(call("finetune", {"--pack", "Q", "--budget", "10"}).code == 3);
}
