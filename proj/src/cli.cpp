#include "jepagrasp/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "jepagrasp/config.hpp"
#include "jepagrasp/error.hpp"
#include "jepagrasp/experiment.hpp"
#include "jepagrasp/gradsuite.hpp"

namespace jepagrasp {

namespace fs = std::filesystem;

namespace {

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value
  std::optional<std::uint64_t> seed;
  std::string data_root;
  std::string output_dir;
  bool overwrite = false;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "key = value config file");
  cmd->add_option("--set", o.overrides, "override one config key (key=value), repeatable");
  cmd->add_option("--seed", o.seed, "seed");
  cmd->add_option("--data-root", o.data_root, "dataset directory (default: $JEPAGRASP_DATA_ROOT or ./data)");
  cmd->add_option("--output-dir", o.output_dir, "run output directory");
  cmd->add_flag("--overwrite", o.overwrite, "replace existing outputs");
}

ExperimentConfig resolve(const CommonOptions& o) {
  ExperimentConfig cfg;
  if (const char* env = std::getenv("JEPAGRASP_DATA_ROOT"); env && *env) cfg.data_root = env;
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path, std::ios::binary);
    if (!in) throw IoError(o.config_path + ": cannot open config");
    std::ostringstream ss;
    ss << in.rdbuf();
    apply_config_text(cfg, ss.str(), o.config_path);
  }
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) cfg.seed = *o.seed;
  if (!o.data_root.empty()) cfg.data_root = o.data_root;
  if (!o.output_dir.empty()) cfg.output_dir = o.output_dir;
  return cfg;
}

void log_config(std::ostream& err, const std::string& command, const ExperimentConfig& cfg) {
  err << "# " << command << " seed=" << cfg.seed << "\n";
  std::istringstream lines(dump_config(cfg));
  std::string line;
  while (std::getline(lines, line)) err << "#   " << line << "\n";
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(dir.string() + ": " + ec.message());
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << text;
  if (!out) throw IoError(path.string() + ": write failed");
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void refuse_existing(const fs::path& path, bool overwrite) {
  if (fs::exists(path) && !overwrite) throw IoError(path.string() + ": already exists (pass --overwrite)");
}

fs::path pack_path(const ExperimentConfig& cfg) { return fs::path(cfg.data_root) / pack_file_name(cfg.pack); }

PreparedData load_prepared(const ExperimentConfig& cfg) {
  Dataset ds = load_dataset(cfg.data_root);
  if (ds.manifest.generator.cloud_size != cfg.model.tokenizer.cloud_size) {
    throw ConfigError("dataset clouds have " + std::to_string(ds.manifest.generator.cloud_size) +
                      " points but tokenizer expects " + std::to_string(cfg.model.tokenizer.cloud_size));
  }
  return prepare_data(std::move(ds), read_pack(pack_path(cfg).string()), cfg.min_quality);
}

struct InitSpec {
  std::string kind = "scratch";
  std::string path;
};

InitSpec parse_init(const std::string& text) {
  if (text == "scratch") return {"scratch", {}};
  if (text.starts_with("pretrained:") && text.size() > 11) return {"pretrained", text.substr(11)};
  throw ConfigError("--init expects scratch or pretrained:PATH, got '" + text + "'");
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"JEPA-pretrained point-cloud encoder with a multi-hypothesis grasp-joint head", "jepagrasp"};
  app.require_subcommand(1);

  CommonOptions gen_o, split_o, pre_o, fine_o, eval_o, grad_o, curve_o, schema_o;

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic grasp dataset");
  add_common(gen, gen_o);

  auto* splits = app.add_subcommand("make-splits", "write and verify a split pack");
  add_common(splits, split_o);
  std::string split_pack;
  splits->add_option("--pack", split_pack, "pack id");

  auto* pre = app.add_subcommand("pretrain", "self-supervised pretraining on the pack's training pool");
  add_common(pre, pre_o);
  std::string pre_pack;
  pre->add_option("--pack", pre_pack, "pack id");

  auto* fine = app.add_subcommand("finetune", "train pool + head (and backbone) at a label budget");
  add_common(fine, fine_o);
  std::string fine_pack, fine_init = "scratch";
  std::optional<int> fine_budget;
  std::optional<std::size_t> fine_k;
  std::optional<double> fine_alpha;
  fine->add_option("--pack", fine_pack, "pack id");
  fine->add_option("--budget", fine_budget, "label budget percent")->check(CLI::IsMember({1, 10, 25, 100}));
  fine->add_option("--init", fine_init, "scratch or pretrained:PATH");
  fine->add_option("--k", fine_k, "hypotheses per grasp (default 5)");
  fine->add_option("--alpha", fine_alpha, "selector loss weight");

  auto* ev = app.add_subcommand("eval", "evaluate a fine-tuned run on val or test");
  add_common(ev, eval_o);
  std::string eval_run, eval_split = "val";
  ev->add_option("--run", eval_run, "fine-tune run directory")->required();
  ev->add_option("--split", eval_split, "val or test")->check(CLI::IsMember({"val", "test"}));

  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every op and the head loss");
  add_common(grad, grad_o);
  std::size_t grad_points = 5;
  grad->add_option("--points", grad_points, "random points per op");

  auto* curves = app.add_subcommand("export-curves", "collect fine-tune results into a budget curve CSV");
  add_common(curves, curve_o);
  std::string curves_out;
  curves->add_option("--out", curves_out, "output CSV (default <output_dir>/curves.csv)");

  auto* schema = app.add_subcommand("config-schema", "print every config key with its default");
  add_common(schema, schema_o);

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return 0;
    } catch (const CLI::CallForAllHelp&) {
      out << app.help("", CLI::AppFormatMode::All);
      return 0;
    } catch (const CLI::ParseError& e) {
      if (e.get_exit_code() == 0) {
        out << app.help();
        return 0;
      }
      throw ConfigError(e.what());
    }
    for (auto* sub : app.get_subcommands()) {
      if (sub->get_help_ptr() && sub->get_help_ptr()->count()) {
        out << sub->help();
        return 0;
      }
    }

    if (gen->parsed()) {
      auto cfg = resolve(gen_o);
      if (gen_o.seed) cfg.data.seed = *gen_o.seed;
      cfg.data.validate();
      log_config(err, "gen-data", cfg);
      const auto m = generate_dataset(cfg.data, cfg.data_root, gen_o.overwrite);
      out << "wrote " << m.objects.size() << " objects, "
          << m.objects.size() * m.generator.samples_per_object << " grasps to " << cfg.data_root << "\n";
      return 0;
    }

    if (splits->parsed()) {
      auto cfg = resolve(split_o);
      if (!split_pack.empty()) cfg.pack = split_pack;
      log_config(err, "make-splits", cfg);
      const Dataset ds = load_dataset(cfg.data_root);
      const SplitPack pack = make_pack(ds.manifest, cfg.pack, cfg.seed);
      const auto violations = verify_pack(pack, ds.manifest, ds.samples);
      for (const auto& v : violations) err << "violation: " << v.kind << ": " << v.detail << "\n";
      if (!violations.empty()) throw VerificationError(std::to_string(violations.size()) + " pack violations");
      const auto path = pack_path(cfg);
      write_pack(path.string(), pack, split_o.overwrite);
      out << "wrote " << path.string() << " (val " << pack.val.size() << ", test " << pack.test.size() << ", train";
      for (const auto& [p, ids] : pack.budgets) out << " " << p << "%:" << ids.size();
      out << ")\n";
      return 0;
    }

    if (pre->parsed()) {
      auto cfg = resolve(pre_o);
      if (!pre_pack.empty()) cfg.pack = pre_pack;
      cfg.validate();
      log_config(err, "pretrain", cfg);
      const fs::path dir = fs::path(cfg.output_dir) / "pretrain" / (cfg.pack + "_s" + std::to_string(cfg.seed));
      refuse_existing(dir / "backbone.ckpt", pre_o.overwrite);
      const auto t0 = std::chrono::steady_clock::now();
      const PreparedData data = load_prepared(cfg);
      MetricsLog log;
      const auto backbone = run_pretraining(cfg, data, &log, [&](const std::string& msg) { err << msg << "\n"; });
      ensure_dir(dir);
      tc::save_checkpoint((dir / "backbone.ckpt").string(), backbone);
      log.write((dir / "metrics.csv").string());
      write_file(dir / "config.txt", dump_config(cfg));
      out << "wrote " << (dir / "backbone.ckpt").string() << " in " << seconds_since(t0) << " s\n";
      return 0;
    }

    if (fine->parsed()) {
      auto cfg = resolve(fine_o);
      if (!fine_pack.empty()) cfg.pack = fine_pack;
      if (fine_budget) cfg.budget = *fine_budget;
      if (fine_k) cfg.model.head.num_hypotheses = *fine_k;
      if (fine_alpha) cfg.model.head.alpha = *fine_alpha;
      const InitSpec init = parse_init(fine_init);
      cfg.validate();
      log_config(err, "finetune", cfg);
      err << "#   init = " << fine_init << "\n";
      const fs::path dir = fs::path(cfg.output_dir) / "finetune" /
                           (cfg.pack + "_b" + std::to_string(cfg.budget) + "_" + init.kind + "_s" + std::to_string(cfg.seed));
      refuse_existing(dir / "model.ckpt", fine_o.overwrite);
      const auto t0 = std::chrono::steady_clock::now();
      const PreparedData data = load_prepared(cfg);
      std::optional<tc::ParameterSet<float>> backbone;
      if (init.kind == "pretrained") backbone = tc::load_checkpoint(init.path);
      auto result = run_finetune(cfg, data, cfg.budget, backbone ? &*backbone : nullptr, cfg.seed,
                                 [&](const std::string& msg) { err << msg << "\n"; });
      ensure_dir(dir);
      tc::save_checkpoint((dir / "model.ckpt").string(), result.params);
      result.log.write((dir / "metrics.csv").string());
      write_file(dir / "config.txt", dump_config(cfg));
      const CurveRow row{cfg.budget, init.kind, cfg.seed, result.val.rmse_top_logit, result.val.coverage,
                         result.val.selection_gap};
      write_file(dir / "summary.csv", curves_header() + "\n" + curve_csv_row(row) + "\n");
      out << result.val.pretty() << "wrote " << dir.string() << " in " << seconds_since(t0) << " s\n";
      return 0;
    }

    if (ev->parsed()) {
      auto cfg = resolve(eval_o);
      apply_config_text(cfg, read_file(fs::path(eval_run) / "config.txt"), (fs::path(eval_run) / "config.txt").string());
      if (!eval_o.data_root.empty()) cfg.data_root = eval_o.data_root;
      cfg.validate();
      log_config(err, "eval", cfg);
      const PreparedData data = load_prepared(cfg);
      GraspModel model(cfg.model);
      model.init(cfg.seed);
      const auto ckpt = tc::load_checkpoint((fs::path(eval_run) / "model.ckpt").string());
      if (model.params().copy_from(ckpt) != model.params().size() || ckpt.size() != model.params().size()) {
        throw FormatError((fs::path(eval_run) / "model.ckpt").string() + ": parameters do not match the run config");
      }
      const auto& ids = eval_split == "val" ? data.pack.val : data.pack.test;
      const auto objects = labeled_objects(data.dataset, data.samples, ids, cfg.model.tokenizer);
      const EvalReport report = evaluate_model(model, objects, cfg.threshold, cfg.coverage_norm);
      write_file(fs::path(eval_run) / ("eval_" + eval_split + ".csv"), EvalReport::csv_header() + "\n" + report.csv_row() + "\n");
      out << report.pretty() << EvalReport::csv_header() << "\n" << report.csv_row() << "\n";
      return 0;
    }

    if (grad->parsed()) {
      auto cfg = resolve(grad_o);
      log_config(err, "gradcheck", cfg);
      const auto rows = run_gradient_suite(cfg.seed, grad_points);
      std::size_t failed = 0;
      char buf[160];
      for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%-30s points %zu  elements %5zu  max_rel_err %.3e  %s\n", r.name.c_str(),
                      r.points, r.checked, r.max_error, r.passed ? "ok" : "FAIL");
        out << buf;
        if (!r.passed) ++failed;
      }
      if (failed) throw VerificationError(std::to_string(failed) + " gradient checks failed");
      return 0;
    }

    if (curves->parsed()) {
      auto cfg = resolve(curve_o);
      log_config(err, "export-curves", cfg);
      const fs::path root = fs::path(cfg.output_dir) / "finetune";
      if (!fs::is_directory(root)) throw IoError(root.string() + ": no fine-tune runs");
      std::vector<CurveRow> rows;
      for (const auto& entry : fs::directory_iterator(root)) {
        const auto summary = entry.path() / "summary.csv";
        if (!fs::exists(summary)) continue;
        for (const auto& r : parse_curves_csv(read_file(summary), summary.string())) rows.push_back(r);
      }
      if (rows.empty()) throw IoError(root.string() + ": no summary.csv files");
      std::sort(rows.begin(), rows.end(), [](const CurveRow& a, const CurveRow& b) {
        return std::tie(a.budget, a.init, a.seed) < std::tie(b.budget, b.init, b.seed);
      });
      std::string csv = curves_header() + "\n";
      for (const auto& r : rows) csv += curve_csv_row(r) + "\n";
      const fs::path dest = curves_out.empty() ? fs::path(cfg.output_dir) / "curves.csv" : fs::path(curves_out);
      refuse_existing(dest, curve_o.overwrite);
      write_file(dest, csv);
      out << curves_summary(rows) << "wrote " << dest.string() << "\n";
      return 0;
    }

    if (schema->parsed()) {
      out << config_schema();
      return 0;
    }
    throw ConfigError("no subcommand given");
  } catch (const Error& e) {
    err << "error: " << error_kind_name(e.kind()) << ": " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::bad_alloc&) {
    err << "error: io: out of memory\n";
    return static_cast<int>(ErrorKind::kIo);
  } catch (const fs::filesystem_error& e) {
    err << "error: io: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::kIo);
  }
}

}  // namespace jepagrasp
