#include "marginlab/experiment_config.hpp"

#include <fstream>
#include <initializer_list>
#include <set>
#include <type_traits>

#include "marginlab/error.hpp"

namespace marginlab {

using nlohmann::ordered_json;

namespace {

class Section {
 public:
  Section(const ordered_json& node, std::string path, std::initializer_list<const char*> keys)
      : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(where("") + "expected an object");
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [key, value] : node_.items()) {
      if (!allowed.count(key)) throw ConfigError(where(key) + "unknown key");
    }
  }

  bool has(const char* key) const { return node_.contains(key); }

  const ordered_json& child(const char* key) const { return node_.at(key); }
  std::string child_path(const char* key) const { return join(key); }

  template <typename T>
    requires std::is_unsigned_v<T>
  void read(const char* key, T& out) const {
    if (!has(key)) return;
    const auto& v = node_.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) {
      throw ConfigError(where(key) + "expected a non-negative integer");
    }
    out = v.get<T>();
  }

  void read(const char* key, double& out) const {
    if (!has(key)) return;
    const auto& v = node_.at(key);
    if (!v.is_number()) throw ConfigError(where(key) + "expected a number");
    out = v.get<double>();
  }

  void read(const char* key, bool& out) const {
    if (!has(key)) return;
    const auto& v = node_.at(key);
    if (!v.is_boolean()) throw ConfigError(where(key) + "expected true or false");
    out = v.get<bool>();
  }

  void read(const char* key, std::string& out) const {
    if (!has(key)) return;
    const auto& v = node_.at(key);
    if (!v.is_string()) throw ConfigError(where(key) + "expected a string");
    out = v.get<std::string>();
  }

  template <typename T>
  void read_list(const char* key, std::vector<T>& out) const {
    if (!has(key)) return;
    const auto& v = node_.at(key);
    if (!v.is_array()) throw ConfigError(where(key) + "expected an array");
    std::vector<T> items;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const auto& e = v[i];
      const std::string item = join(key) + "[" + std::to_string(i) + "]";
      if constexpr (std::is_floating_point_v<T>) {
        if (!e.is_number()) throw ConfigError(item + ": expected a number");
      } else {
        if (!e.is_number_integer() || e.get<long long>() < 0) {
          throw ConfigError(item + ": expected a non-negative integer");
        }
      }
      items.push_back(e.get<T>());
    }
    out = std::move(items);
  }

  std::string where(const std::string& key) const {
    return (key.empty() ? (path_.empty() ? std::string("<root>") : path_) : join(key)) + ": ";
  }

 private:
  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const ordered_json& node_;
  std::string path_;
};

// Re-raises library validation errors with the field path attached.
template <typename F>
void check(const std::string& path, F&& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace

ExperimentConfig default_experiment_config() { return ExperimentConfig{}; }

void validate(const ExperimentConfig& cfg) {
  check("dataset", [&] { validate(cfg.dataset); });
  if (cfg.model.feature_dim < 2) throw ConfigError("model.feature_dim: must be >= 2");
  for (std::size_t i = 0; i < cfg.model.hidden.size(); ++i) {
    if (cfg.model.hidden[i] < 1) {
      throw ConfigError("model.hidden[" + std::to_string(i) + "]: must be >= 1");
    }
  }
  const LossSpec& spec = cfg.train.spec;
  if (spec.variant != LossVariant::Softmax && !(spec.s > 0.0)) {
    throw ConfigError("loss.s: must be positive");
  }
  if (!(spec.m >= 0.0 && spec.m < 1.0)) throw ConfigError("loss.m: m must lie in [0, 1)");
  if (spec.variant != LossVariant::Lmcl && spec.m != 0.0) {
    throw ConfigError("loss.m: m must be 0 unless variant is LMCL");
  }
  if (cfg.train.epochs < 1) throw ConfigError("train.epochs: must be >= 1");
  if (cfg.train.batch_size < 1) throw ConfigError("train.batch_size: must be >= 1");
  if (!(cfg.train.learning_rate > 0.0)) throw ConfigError("train.learning_rate: must be positive");
  check("train", [&] { validate(cfg.train); });
  if (cfg.eval.holdout_per_class < 2) {
    throw ConfigError("eval.holdout_per_class: must be >= 2 to form positive pairs");
  }
  if (cfg.eval.pairs_per_type < 1) throw ConfigError("eval.pairs_per_type: must be >= 1");
  for (std::size_t i = 0; i < cfg.eval.far.size(); ++i) {
    const double f = cfg.eval.far[i];
    if (!(f > 0.0 && f <= 1.0)) {
      throw ConfigError("eval.far[" + std::to_string(i) + "]: must lie in (0, 1]");
    }
  }
  if (cfg.m_grid.empty()) throw ConfigError("m_grid: must not be empty");
  for (std::size_t i = 0; i < cfg.m_grid.size(); ++i) {
    const double m = cfg.m_grid[i];
    if (!(m >= 0.0 && m < 1.0)) {
      throw ConfigError("m_grid[" + std::to_string(i) + "]: m must lie in [0, 1)");
    }
  }
  if (cfg.seeds.empty()) throw ConfigError("seeds: must not be empty");
}

ExperimentConfig parse_experiment_config(const ordered_json& doc) {
  ExperimentConfig cfg;
  const Section root(doc, "",
                     {"dataset", "model", "loss", "train", "eval", "m_grid", "seeds", "output_dir"});
  if (root.has("dataset")) {
    const Section s(root.child("dataset"), "dataset",
                    {"classes", "per_class", "input_dim", "dispersion", "center_scale", "seed"});
    s.read("classes", cfg.dataset.classes);
    s.read("per_class", cfg.dataset.per_class);
    s.read("input_dim", cfg.dataset.input_dim);
    s.read("dispersion", cfg.dataset.dispersion);
    s.read("center_scale", cfg.dataset.center_scale);
    s.read("seed", cfg.dataset.seed);
  }
  if (root.has("model")) {
    const Section s(root.child("model"), "model", {"hidden", "feature_dim"});
    s.read_list("hidden", cfg.model.hidden);
    s.read("feature_dim", cfg.model.feature_dim);
  }
  if (root.has("loss")) {
    const Section s(root.child("loss"), "loss", {"variant", "s", "m"});
    std::string variant = to_string(cfg.train.spec.variant);
    s.read("variant", variant);
    const auto parsed = parse_loss_variant(variant);
    if (!parsed) throw ConfigError("loss.variant: expected SOFTMAX, NSL or LMCL");
    cfg.train.spec.variant = *parsed;
    s.read("s", cfg.train.spec.s);
    s.read("m", cfg.train.spec.m);
  }
  if (root.has("train")) {
    const Section s(root.child("train"), "train",
                    {"epochs", "batch_size", "learning_rate", "lr_drop_epochs", "lr_drop_factor",
                     "momentum", "weight_decay", "normalize_features", "warm_start_epochs",
                     "convergence_window", "convergence_ratio"});
    s.read("epochs", cfg.train.epochs);
    s.read("batch_size", cfg.train.batch_size);
    s.read("learning_rate", cfg.train.learning_rate);
    s.read_list("lr_drop_epochs", cfg.train.lr_drop_epochs);
    s.read("lr_drop_factor", cfg.train.lr_drop_factor);
    s.read("momentum", cfg.train.momentum);
    s.read("weight_decay", cfg.train.weight_decay);
    s.read("normalize_features", cfg.train.normalize_features);
    s.read("warm_start_epochs", cfg.warm_start_epochs);
    s.read("convergence_window", cfg.train.convergence_window);
    s.read("convergence_ratio", cfg.train.convergence_ratio);
  }
  if (root.has("eval")) {
    const Section s(root.child("eval"), "eval", {"holdout_per_class", "pairs_per_type", "far"});
    s.read("holdout_per_class", cfg.eval.holdout_per_class);
    s.read("pairs_per_type", cfg.eval.pairs_per_type);
    s.read_list("far", cfg.eval.far);
  }
  root.read_list("m_grid", cfg.m_grid);
  root.read_list("seeds", cfg.seeds);
  if (root.has("output_dir")) {
    std::string dir;
    root.read("output_dir", dir);
    cfg.output_dir = dir;
  }
  validate(cfg);
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  ordered_json doc;
  try {
    doc = ordered_json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
  return parse_experiment_config(doc);
}

ordered_json to_json(const ExperimentConfig& cfg) {
  ordered_json j;
  j["dataset"] = {{"classes", cfg.dataset.classes},
                  {"per_class", cfg.dataset.per_class},
                  {"input_dim", cfg.dataset.input_dim},
                  {"dispersion", cfg.dataset.dispersion},
                  {"center_scale", cfg.dataset.center_scale},
                  {"seed", cfg.dataset.seed}};
  j["model"] = {{"hidden", cfg.model.hidden}, {"feature_dim", cfg.model.feature_dim}};
  j["loss"] = {{"variant", to_string(cfg.train.spec.variant)},
               {"s", cfg.train.spec.s},
               {"m", cfg.train.spec.m}};
  j["train"] = {{"epochs", cfg.train.epochs},
                {"batch_size", cfg.train.batch_size},
                {"learning_rate", cfg.train.learning_rate},
                {"lr_drop_epochs", cfg.train.lr_drop_epochs},
                {"lr_drop_factor", cfg.train.lr_drop_factor},
                {"momentum", cfg.train.momentum},
                {"weight_decay", cfg.train.weight_decay},
                {"normalize_features", cfg.train.normalize_features},
                {"warm_start_epochs", cfg.warm_start_epochs},
                {"convergence_window", cfg.train.convergence_window},
                {"convergence_ratio", cfg.train.convergence_ratio}};
  j["eval"] = {{"holdout_per_class", cfg.eval.holdout_per_class},
               {"pairs_per_type", cfg.eval.pairs_per_type},
               {"far", cfg.eval.far}};
  j["m_grid"] = cfg.m_grid;
  j["seeds"] = cfg.seeds;
  j["output_dir"] = cfg.output_dir.generic_string();
  return j;
}

}  // namespace marginlab
