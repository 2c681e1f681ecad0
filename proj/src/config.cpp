#include "jepagrasp/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "jepagrasp/error.hpp"
#include "jepagrasp/splits.hpp"

namespace jepagrasp {

void ExperimentConfig::validate() const {
  if (!is_budget(budget)) throw ConfigError("budget must be one of 1, 10, 25, 100 (got " + std::to_string(budget) + ")");
  if (pack.empty()) throw ConfigError("pack id must be non-empty");
  if (!(threshold >= 0.0)) throw ConfigError("threshold must be >= 0");
  data.validate();
  model.validate();
  pretrain.validate();
  finetune.validate();
  if (model.tokenizer.cloud_size != data.cloud_size) throw ConfigError("tokenizer and dataset cloud sizes differ");
  if (model.tokenizer.num_groups > model.tokenizer.cloud_size) throw ConfigError("tokenizer.num_groups exceeds cloud size");
}

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename N>
N parse_num(const std::string& key, const std::string& v) {
  N out{};
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError(key + ": cannot parse '" + v + "'");
  }
  if constexpr (std::is_floating_point_v<N>) {
    if (!std::isfinite(out) && v != "inf") throw ConfigError(key + ": value must be finite");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

struct Entry {
  std::string key;
  std::string help;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename Access>
Entry number(std::string key, std::string help, Access access) {
  using V = std::remove_cvref_t<decltype(access(std::declval<ExperimentConfig&>()))>;
  Entry e{key, std::move(help), {}, {}};
  e.set = [access, key](ExperimentConfig& c, const std::string& v) { access(c) = parse_num<V>(key, v); };
  e.get = [access](const ExperimentConfig& c) {
    if constexpr (std::is_floating_point_v<V>) {
      return fmt(access(c));
    } else {
      return std::to_string(access(c));
    }
  };
  return e;
}

template <typename Access>
Entry flag(std::string key, std::string help, Access access) {
  Entry e{key, std::move(help), {}, {}};
  e.set = [access, key](ExperimentConfig& c, const std::string& v) { access(c) = parse_bool(key, v); };
  e.get = [access](const ExperimentConfig& c) {
    return std::string(access(c) ? "true" : "false");
  };
  return e;
}

template <typename Access>
Entry text(std::string key, std::string help, Access access) {
  Entry e{key, std::move(help), {}, {}};
  e.set = [access](ExperimentConfig& c, const std::string& v) { access(c) = v; };
  e.get = [access](const ExperimentConfig& c) { return access(c); };
  return e;
}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    using C = ExperimentConfig;
    std::vector<Entry> t;
    t.push_back(text("data_root", "dataset directory (default: $JEPAGRASP_DATA_ROOT or ./data)",
                     [](auto& c) -> auto& { return c.data_root; }));
    t.push_back(text("output_dir", "directory for packs, checkpoints, logs and curves",
                     [](auto& c) -> auto& { return c.output_dir; }));
    t.push_back(text("pack", "split pack id", [](auto& c) -> auto& { return c.pack; }));
    t.push_back(number("budget", "label budget in percent: 1, 10, 25 or 100", [](auto& c) -> auto& { return c.budget; }));
    t.push_back(number("seed", "run seed (splits, init, batching)", [](auto& c) -> auto& { return c.seed; }));
    t.push_back(number("min_quality", "grasps with quality below this are discarded",
                       [](auto& c) -> auto& { return c.min_quality; }));
    t.push_back(number("threshold", "coverage threshold in radians", [](auto& c) -> auto& { return c.threshold; }));
    {
      Entry e{"coverage_norm", "coverage distance: max (per-joint) or rmse", {}, {}};
      e.set = [](C& c, const std::string& v) {
        if (v == "max") c.coverage_norm = CoverageNorm::kMaxAbs;
        else if (v == "rmse") c.coverage_norm = CoverageNorm::kRmse;
        else throw ConfigError("coverage_norm: expected max or rmse, got '" + v + "'");
      };
      e.get = [](const C& c) { return std::string(c.coverage_norm == CoverageNorm::kMaxAbs ? "max" : "rmse"); };
      t.push_back(std::move(e));
    }

    t.push_back(number("data.seed", "generator seed", [](auto& c) -> auto& { return c.data.seed; }));
    t.push_back(number("data.num_categories", "shape families used (2..5)",
                       [](auto& c) -> auto& { return c.data.num_categories; }));
    t.push_back(number("data.objects_per_category", "objects per family",
                       [](auto& c) -> auto& { return c.data.objects_per_category; }));
    t.push_back(number("data.samples_per_object", "grasps per object",
                       [](auto& c) -> auto& { return c.data.samples_per_object; }));
    {
      Entry e = number("data.cloud_size", "points per cloud (also the tokenizer input size)",
                       [](auto& c) -> auto& { return c.data.cloud_size; });
      auto inner = e.set;
      e.set = [inner](C& c, const std::string& v) {
        inner(c, v);
        c.model.tokenizer.cloud_size = c.data.cloud_size;
      };
      t.push_back(std::move(e));
    }
    t.push_back(number("data.num_modes", "discrete grasp modes on joint 0",
                       [](auto& c) -> auto& { return c.data.num_modes; }));
    t.push_back(number("data.mode_gap", "spacing between modes, rad", [](auto& c) -> auto& { return c.data.mode_gap; }));
    t.push_back(number("data.noise", "per-joint label noise sigma, rad", [](auto& c) -> auto& { return c.data.noise; }));
    t.push_back(number("data.low_quality_fraction", "fraction of grasps scored below 1.5",
                       [](auto& c) -> auto& { return c.data.low_quality_fraction; }));
    t.push_back(number("data.mode_minority_rate", "probability a grasp avoids its pose-preferred mode",
                       [](auto& c) -> auto& { return c.data.mode_minority_rate; }));

    t.push_back(number("tokenizer.num_groups", "patches per cloud (G)",
                       [](auto& c) -> auto& { return c.model.tokenizer.num_groups; }));
    t.push_back(number("tokenizer.group_size", "points per patch (S)",
                       [](auto& c) -> auto& { return c.model.tokenizer.group_size; }));
    t.push_back(number("tokenizer.radius", "patch radius on the normalized cloud",
                       [](auto& c) -> auto& { return c.model.tokenizer.radius; }));
    t.push_back(number("tokenizer.hidden_dim", "width of the pointwise patch MLP",
                       [](auto& c) -> auto& { return c.model.tokenizer.hidden_dim; }));

    t.push_back(number("encoder.depth", "transformer blocks", [](auto& c) -> auto& { return c.model.encoder.depth; }));
    {
      Entry e = number("encoder.embed_dim", "token width D",
                       [](auto& c) -> auto& { return c.model.encoder.embed_dim; });
      auto inner = e.set;
      e.set = [inner](C& c, const std::string& v) {
        inner(c, v);
        c.model.tokenizer.embed_dim = c.model.encoder.embed_dim;
      };
      t.push_back(std::move(e));
    }
    t.push_back(number("encoder.heads", "attention heads", [](auto& c) -> auto& { return c.model.encoder.heads; }));
    t.push_back(number("encoder.mlp_ratio", "MLP width / D", [](auto& c) -> auto& { return c.model.encoder.mlp_ratio; }));
    t.push_back(flag("encoder.sinusoidal_positions", "sin/cos center features (false: raw xyz)",
                     [](auto& c) -> auto& { return c.model.encoder.sinusoidal_positions; }));
    t.push_back(number("encoder.position_frequencies", "frequencies per axis",
                       [](auto& c) -> auto& { return c.model.encoder.position_frequencies; }));

    t.push_back(number("predictor.depth", "predictor blocks", [](auto& c) -> auto& { return c.model.predictor.depth; }));
    t.push_back(number("predictor.width", "predictor width (0: D)",
                       [](auto& c) -> auto& { return c.model.predictor.width; }));
    t.push_back(number("predictor.heads", "predictor attention heads",
                       [](auto& c) -> auto& { return c.model.predictor.heads; }));

    t.push_back(number("head.k", "hypotheses per grasp (K)",
                       [](auto& c) -> auto& { return c.model.head.num_hypotheses; }));
    t.push_back(number("head.hidden_dim", "hidden width", [](auto& c) -> auto& { return c.model.head.hidden_dim; }));
    t.push_back(number("head.hidden_layers", "hidden layers",
                       [](auto& c) -> auto& { return c.model.head.hidden_layers; }));
    t.push_back(number("head.alpha", "selector cross-entropy weight", [](auto& c) -> auto& { return c.model.head.alpha; }));

    t.push_back(number("pretrain.steps", "optimizer steps", [](auto& c) -> auto& { return c.pretrain.steps; }));
    t.push_back(number("pretrain.batch_size", "objects per step",
                       [](auto& c) -> auto& { return c.pretrain.batch_size; }));
    t.push_back(number("pretrain.lr", "Adam learning rate", [](auto& c) -> auto& { return c.pretrain.lr; }));
    t.push_back(number("pretrain.tau_start", "EMA momentum at step 0", [](auto& c) -> auto& { return c.pretrain.tau_start; }));
    t.push_back(number("pretrain.tau_end", "EMA momentum at the last step",
                       [](auto& c) -> auto& { return c.pretrain.tau_end; }));
    {
      Entry e{"pretrain.loss", "latent loss: smooth_l1 or mse", {}, {}};
      e.set = [](C& c, const std::string& v) {
        if (v == "smooth_l1") c.pretrain.loss = LatentLoss::kSmoothL1;
        else if (v == "mse") c.pretrain.loss = LatentLoss::kMse;
        else throw ConfigError("pretrain.loss: expected smooth_l1 or mse, got '" + v + "'");
      };
      e.get = [](const C& c) { return std::string(c.pretrain.loss == LatentLoss::kSmoothL1 ? "smooth_l1" : "mse"); };
      t.push_back(std::move(e));
    }
    t.push_back(flag("pretrain.normalize_targets", "layer-norm target latents",
                     [](auto& c) -> auto& { return c.pretrain.normalize_targets; }));
    t.push_back(flag("pretrain.cosine_decay", "cosine learning-rate decay",
                     [](auto& c) -> auto& { return c.pretrain.cosine_decay; }));
    t.push_back(number("pretrain.log_every", "steps between log rows",
                       [](auto& c) -> auto& { return c.pretrain.log_every; }));
    t.push_back(number("pretrain.collapse_threshold", "minimum embedding std across objects",
                       [](auto& c) -> auto& { return c.pretrain.collapse_threshold; }));
    t.push_back(number("pretrain.mask.num_targets", "target blocks per sample",
                       [](auto& c) -> auto& { return c.pretrain.mask.num_targets; }));
    t.push_back(number("pretrain.mask.target_scale_min", "smallest target block fraction",
                       [](auto& c) -> auto& { return c.pretrain.mask.target_scale_min; }));
    t.push_back(number("pretrain.mask.target_scale_max", "largest target block fraction",
                       [](auto& c) -> auto& { return c.pretrain.mask.target_scale_max; }));
    t.push_back(number("pretrain.mask.context_scale_min", "smallest kept context fraction",
                       [](auto& c) -> auto& { return c.pretrain.mask.context_scale_min; }));
    t.push_back(number("pretrain.mask.context_scale_max", "largest kept context fraction",
                       [](auto& c) -> auto& { return c.pretrain.mask.context_scale_max; }));
    t.push_back(number("pretrain.mask.max_retries", "redraws before shrinking blocks",
                       [](auto& c) -> auto& { return c.pretrain.mask.max_retries; }));

    t.push_back(number("finetune.steps", "optimizer steps", [](auto& c) -> auto& { return c.finetune.steps; }));
    t.push_back(number("finetune.lr_backbone", "backbone learning rate",
                       [](auto& c) -> auto& { return c.finetune.lr_backbone; }));
    t.push_back(number("finetune.lr_head", "pool + head learning rate", [](auto& c) -> auto& { return c.finetune.lr_head; }));
    t.push_back(number("finetune.batch_objects", "objects per step",
                       [](auto& c) -> auto& { return c.finetune.batch_objects; }));
    t.push_back(number("finetune.samples_per_object", "grasps per object per step",
                       [](auto& c) -> auto& { return c.finetune.samples_per_object; }));
    t.push_back(flag("finetune.freeze_backbone", "keep the backbone fixed",
                     [](auto& c) -> auto& { return c.finetune.freeze_backbone; }));
    t.push_back(flag("finetune.freeze_tokenizer", "keep the patch embedder fixed",
                     [](auto& c) -> auto& { return c.finetune.freeze_tokenizer; }));
    t.push_back(flag("finetune.cosine_decay", "cosine learning-rate decay",
                     [](auto& c) -> auto& { return c.finetune.cosine_decay; }));
    t.push_back(number("finetune.eval_every", "steps between validation rows (0: end only)",
                       [](auto& c) -> auto& { return c.finetune.eval_every; }));
    return t;
  }();
  return table;
}

const Entry& find_entry(const std::string& key) {
  for (const auto& e : entries()) {
    if (e.key == key) return e;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  find_entry(key).set(cfg, value);
}

std::string get_config_value(const ExperimentConfig& cfg, const std::string& key) { return find_entry(key).get(cfg); }

void apply_config_text(ExperimentConfig& cfg, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (!seen.insert(key).second) throw ConfigError(where + ": duplicate key '" + key + "'");
    try {
      set_config_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open config");
  std::ostringstream ss;
  ss << in.rdbuf();
  ExperimentConfig cfg;
  apply_config_text(cfg, ss.str(), path);
  return cfg;
}

std::vector<ConfigKey> config_keys() {
  std::vector<ConfigKey> out;
  for (const auto& e : entries()) out.push_back({e.key, e.help});
  return out;
}

std::string dump_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& e : entries()) out += e.key + " = " + e.get(cfg) + "\n";
  return out;
}

std::string config_schema() {
  const ExperimentConfig defaults;
  std::string out;
  for (const auto& e : entries()) {
    std::string line = e.key + " = " + e.get(defaults);
    if (line.size() < 44) line.resize(44, ' ');
    out += line + "  # " + e.help + "\n";
  }
  return out;
}

}  // namespace jepagrasp
