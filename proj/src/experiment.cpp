#include "jepagrasp/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <map>
#include <sstream>

#include "jepagrasp/error.hpp"

namespace jepagrasp {

PreparedData prepare_data(Dataset dataset, SplitPack pack, double min_quality) {
  PreparedData d;
  d.samples = filter_quality(dataset.samples, min_quality);
  d.dataset = std::move(dataset);
  d.pack = std::move(pack);
  const auto violations = verify_pack(d.pack, d.dataset.manifest);
  if (!violations.empty()) {
    throw VerificationError("pack '" + d.pack.pack_id + "' does not match the dataset: " + violations.front().kind +
                            ": " + violations.front().detail);
  }
  return d;
}

std::vector<ObjectTokens> pretrain_objects(const PreparedData& data, const TokenizerConfig& cfg) {
  std::vector<ObjectTokens> out;
  for (const auto& id : data.pack.budget(100)) {
    const std::size_t idx = data.dataset.manifest.index_of(id);
    out.push_back(tokenize_object(data.dataset.clouds[idx], data.dataset.manifest.objects[idx].category_id, cfg));
  }
  return out;
}

tc::ParameterSet<float> run_pretraining(const ExperimentConfig& cfg, const PreparedData& data, MetricsLog* log,
                                        const Progress& progress) {
  PretrainConfig pc = cfg.pretrain;
  pc.seed = cfg.seed;
  Pretrainer trainer(cfg.model, pc, pretrain_objects(data, cfg.model.tokenizer));
  trainer.run(log, [&](std::size_t step, const PretrainStepStats& s) {
    if (progress && (step == 1 || step % pc.log_every == 0 || step == pc.steps)) {
      char buf[128];
      std::snprintf(buf, sizeof(buf), "pretrain step %zu/%zu loss %.6f tau %.5f", step, pc.steps, s.loss, s.tau);
      progress(buf);
    }
  });
  return trainer.backbone();
}

FinetuneResult run_finetune(const ExperimentConfig& cfg, const PreparedData& data, int budget,
                            const tc::ParameterSet<float>* backbone, std::uint64_t seed, const Progress& progress) {
  GraspModel model(cfg.model);
  model.init(seed);
  if (backbone) model.load_backbone(*backbone);
  FinetuneConfig fc = cfg.finetune;
  fc.seed = seed;
  auto train = labeled_objects(data.dataset, data.samples, data.pack.budget(budget), cfg.model.tokenizer);
  const auto val = labeled_objects(data.dataset, data.samples, data.pack.val, cfg.model.tokenizer);
  FinetuneResult result;
  Finetuner tuner(model, fc, std::move(train));
  tuner.run(&result.log, val, [&](std::size_t step, double loss) {
    if (progress && (step == 1 || step % 100 == 0 || step == fc.steps)) {
      char buf[128];
      std::snprintf(buf, sizeof(buf), "finetune step %zu/%zu loss %.6f", step, fc.steps, loss);
      progress(buf);
    }
  });
  result.val = evaluate_model(model, val, cfg.threshold, cfg.coverage_norm);
  result.params = model.params();
  return result;
}

std::string curves_header() { return "budget,init,seed,rmse_top_logit,coverage,selection_gap"; }

std::string curve_csv_row(const CurveRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%s,%llu,%.9g,%.9g,%.9g", r.budget, r.init.c_str(),
                static_cast<unsigned long long>(r.seed), r.rmse_top_logit, r.coverage, r.selection_gap);
  return buf;
}

std::vector<CurveRow> parse_curves_csv(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != curves_header()) throw IoError(origin + ": unexpected header");
  std::vector<CurveRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 6) throw IoError(origin + ":" + std::to_string(lineno) + ": expected 6 fields");
    CurveRow r;
    try {
      r.budget = std::stoi(f[0]);
      r.init = f[1];
      r.seed = std::stoull(f[2]);
      r.rmse_top_logit = std::stod(f[3]);
      r.coverage = std::stod(f[4]);
      r.selection_gap = std::stod(f[5]);
    } catch (const std::exception&) {
      throw IoError(origin + ":" + std::to_string(lineno) + ": bad number");
    }
    rows.push_back(r);
  }
  return rows;
}

std::string curves_summary(const std::vector<CurveRow>& rows) {
  std::map<std::pair<int, std::string>, std::pair<double, int>> acc;
  for (const auto& r : rows) {
    auto& a = acc[{r.budget, r.init}];
    a.first += r.rmse_top_logit;
    ++a.second;
  }
  std::string out = "budget  init        seeds  mean_rmse_top_logit\n";
  char buf[128];
  for (const auto& [key, a] : acc) {
    std::snprintf(buf, sizeof(buf), "%-7d %-11s %-6d %.4f\n", key.first, key.second.c_str(), a.second,
                  a.first / a.second);
    out += buf;
  }
  return out;
}

}  // namespace jepagrasp
