#include "mate/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "mate/errors.hpp"

namespace mate {

namespace {

using toml::Value;

struct Field {
  std::function<Value()> get;
  std::function<void(const Value&, const std::string& key)> set;
};

[[noreturn]] void type_error(const std::string& key, const std::string& expected, const Value& v) {
  throw ConfigError("config key '" + key + "': expected " + expected + ", got " + v.kind_name());
}

std::int64_t as_int(const Value& v, const std::string& key) {
  if (v.kind != Value::Kind::kInt) type_error(key, "integer", v);
  return v.i;
}

double as_float(const Value& v, const std::string& key) {
  if (v.kind == Value::Kind::kInt) return static_cast<double>(v.i);
  if (v.kind != Value::Kind::kFloat) type_error(key, "number", v);
  return v.f;
}

Field field(int& ref) {
  return {[&ref] { return Value::of(static_cast<std::int64_t>(ref)); },
          [&ref](const Value& v, const std::string& key) { ref = static_cast<int>(as_int(v, key)); }};
}

Field field(std::uint64_t& ref) {
  return {[&ref] { return Value::of(static_cast<std::int64_t>(ref)); },
          [&ref](const Value& v, const std::string& key) {
            const auto i = as_int(v, key);
            if (i < 0) throw ConfigError("config key '" + key + "' must be non-negative");
            ref = static_cast<std::uint64_t>(i);
          }};
}

Field field(double& ref) {
  return {[&ref] { return Value::of(ref); },
          [&ref](const Value& v, const std::string& key) { ref = as_float(v, key); }};
}

Field field(bool& ref) {
  return {[&ref] { return Value::of(ref); },
          [&ref](const Value& v, const std::string& key) {
            if (v.kind != Value::Kind::kBool) type_error(key, "boolean", v);
            ref = v.b;
          }};
}

Field field(std::string& ref) {
  return {[&ref] { return Value::of(ref); },
          [&ref](const Value& v, const std::string& key) {
            if (v.kind != Value::Kind::kString) type_error(key, "string", v);
            ref = v.s;
          }};
}

Field field(std::vector<int>& ref) {
  return {[&ref] {
            std::vector<Value> items;
            for (int x : ref) items.push_back(Value::of(static_cast<std::int64_t>(x)));
            return Value::array(std::move(items));
          },
          [&ref](const Value& v, const std::string& key) {
            if (v.kind != Value::Kind::kArray) type_error(key, "array of integers", v);
            ref.clear();
            for (const auto& item : v.items) ref.push_back(static_cast<int>(as_int(item, key)));
          }};
}

Field field(std::vector<double>& ref) {
  return {[&ref] {
            std::vector<Value> items;
            for (double x : ref) items.push_back(Value::of(x));
            return Value::array(std::move(items));
          },
          [&ref](const Value& v, const std::string& key) {
            if (v.kind != Value::Kind::kArray) type_error(key, "array of numbers", v);
            ref.clear();
            for (const auto& item : v.items) ref.push_back(as_float(item, key));
          }};
}

template <typename Enum>
Field enum_field(Enum& ref, std::string (*name)(Enum), Enum (*parse)(const std::string&)) {
  return {[&ref, name] { return Value::of(name(ref)); },
          [&ref, parse](const Value& v, const std::string& key) {
            if (v.kind != Value::Kind::kString) type_error(key, "string", v);
            ref = parse(v.s);
          }};
}

template <typename Visitor>
void visit_fields(ExperimentConfig& c, Visitor&& visit) {
  namespace sg = synthgen;
  auto& g = c.generation;
  visit("generation.num_modalities", field(g.num_modalities));
  visit("generation.n_c", field(g.n_c));
  visit("generation.n_s", field(g.n_s));
  visit("generation.T", field(g.T));
  visit("generation.N", field(g.N));
  visit("generation.obs_dims", field(g.obs_dims));
  visit("generation.lag", field(g.lag));
  visit("generation.transition_kind",
        enum_field<sg::TransitionKind>(g.transition, &sg::to_string, &sg::parse_transition_kind));
  visit("generation.transition_init",
        enum_field<sg::TransitionInit>(g.transition_init, &sg::to_string, &sg::parse_transition_init));
  visit("generation.transition_hidden", field(g.transition_hidden));
  visit("generation.dependency_strength", field(g.dependency_strength));
  visit("generation.noise_scale", field(g.noise_scale));
  visit("generation.noise", enum_field<sg::NoiseKind>(g.noise, &sg::to_string, &sg::parse_noise_kind));
  visit("generation.mixing", enum_field<sg::MixingKind>(g.mixing, &sg::to_string, &sg::parse_mixing_kind));
  visit("generation.mixing_layers", field(g.mixing_layers));
  visit("generation.mixing_scale", field(g.mixing_scale));
  visit("generation.num_classes", field(g.num_classes));
  visit("generation.seed", field(g.seed));

  auto& m = c.model;
  visit("model.n_c", field(m.n_c));
  visit("model.n_s", field(m.n_s));
  visit("model.cnn_channels", field(m.cnn_channels));
  visit("model.kernel_size", field(m.kernel_size));
  visit("model.gru_hidden", field(m.gru_hidden));
  visit("model.decoder_hidden", field(m.decoder_hidden));
  visit("model.prior_hidden", field(m.prior_hidden));
  visit("model.prior_layers", field(m.prior_layers));
  visit("model.classifier_hidden", field(m.classifier_hidden));
  visit("model.fusion", field(m.fusion));
  visit("model.initial_prior_std", field(m.initial_prior_std));

  auto& l = c.loss;
  visit("loss.alpha", field(l.alpha));
  visit("loss.beta", field(l.beta));
  visit("loss.gamma", field(l.gamma));
  visit("loss.drop_private_kl", field(l.drop_private_kl));
  visit("loss.drop_shared_kl", field(l.drop_shared_kl));
  visit("loss.drop_reconstruction", field(l.drop_reconstruction));
  visit("loss.drop_alignment", field(l.drop_alignment));
  visit("loss.orthogonal_baseline", field(l.orthogonal_baseline));
  visit("loss.orthogonality_weight", field(l.orthogonality_weight));
  visit("loss.temperature", field(l.temperature));
  visit("loss.task_loss", field(l.task_loss));

  auto& t = c.train;
  visit("train.data_path", field(t.data_path));
  visit("train.optimizer", field(t.optimizer));
  visit("train.lr_max", field(t.lr_max));
  visit("train.lr_min", field(t.lr_min));
  visit("train.weight_decay", field(t.weight_decay));
  visit("train.adam_beta1", field(t.adam_beta1));
  visit("train.adam_beta2", field(t.adam_beta2));
  visit("train.adam_eps", field(t.adam_eps));
  visit("train.batch_size", field(t.batch_size));
  visit("train.epochs", field(t.epochs));
  visit("train.window_length", field(t.window_length));
  visit("train.seed", field(t.seed));
  visit("train.mc_samples", field(t.mc_samples));
  visit("train.grad_clip", field(t.grad_clip));
  visit("train.max_steps", field(t.max_steps));
  visit("train.log_every", field(t.log_every));
  visit("train.kl_warmup_epochs", field(t.kl_warmup_epochs));

  auto& e = c.eval;
  visit("eval.test_data_path", field(e.test_data_path));
  visit("eval.test_fraction", field(e.test_fraction));
  visit("eval.knn_k", field(e.knn_k));
  visit("eval.correlation", field(e.correlation));
  visit("eval.ratios", field(e.ratios));
  visit("eval.r2_lambda", field(e.r2_lambda));
  visit("eval.r2_max_train", field(e.r2_max_train));
  visit("eval.tsne_perplexity", field(e.tsne_perplexity));
  visit("eval.seed", field(e.seed));
}

}  // namespace

toml::FlatTable to_table(const ExperimentConfig& config) {
  ExperimentConfig copy = config;
  toml::FlatTable table;
  visit_fields(copy, [&](const std::string& key, const Field& f) { table[key] = f.get(); });
  return table;
}

void apply_table(ExperimentConfig& config, const toml::FlatTable& table) {
  std::map<std::string, Field> fields;
  visit_fields(config, [&](const std::string& key, Field f) { fields.emplace(key, std::move(f)); });
  for (const auto& [key, value] : table) {
    const auto it = fields.find(key);
    if (it == fields.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(value, key);
  }
}

void apply_override(ExperimentConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  std::string key = assignment.substr(0, eq);
  while (!key.empty() && key.back() == ' ') key.pop_back();
  std::string text = assignment.substr(eq + 1);
  toml::Value value;
  try {
    value = toml::parse_value(text);
  } catch (const ConfigError&) {
    // Unquoted strings are accepted on the command line.
    value = toml::Value::of(text);
  }
  apply_table(config, {{key, value}});
}

void validate(const ExperimentConfig& c) {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("invalid config: " + what);
  };
  require(c.model.n_c >= 1 && c.model.n_s >= 1, "model.n_c and model.n_s must be positive");
  require(c.model.cnn_channels >= 1 && c.model.gru_hidden >= 1, "encoder widths must be positive");
  require(c.model.kernel_size >= 1 && c.model.kernel_size % 2 == 1, "model.kernel_size must be odd and positive");
  require(c.model.prior_hidden >= 1 && c.model.prior_layers >= 1, "prior network sizes must be positive");
  require(c.model.classifier_hidden >= 1, "model.classifier_hidden must be positive");
  for (int h : c.model.decoder_hidden) require(h >= 1, "model.decoder_hidden entries must be positive");
  require(c.model.fusion == "first" || c.model.fusion == "mean", "model.fusion must be 'first' or 'mean'");
  require(c.model.initial_prior_std > 0, "model.initial_prior_std must be positive");

  const auto& l = c.loss;
  for (double w : {l.alpha, l.beta, l.gamma, l.orthogonality_weight})
    require(std::isfinite(w) && w >= 0, "loss weights must be finite and >= 0");
  require(l.temperature >= 0 && std::isfinite(l.temperature), "loss.temperature must be >= 0");

  const auto& t = c.train;
  require(t.optimizer == "adamw", "train.optimizer must be 'adamw'");
  require(t.lr_max > 0 && t.lr_min > 0, "learning rates must be positive");
  require(t.lr_min <= t.lr_max, "train.lr_min must be <= train.lr_max");
  require(t.weight_decay >= 0, "train.weight_decay must be >= 0");
  require(t.batch_size >= 1, "train.batch_size must be >= 1");
  require(t.epochs >= 0, "train.epochs must be >= 0");
  require(t.window_length >= 0, "train.window_length must be >= 0");
  require(t.mc_samples >= 1, "train.mc_samples must be >= 1");
  require(t.grad_clip >= 0, "train.grad_clip must be >= 0");
  require(t.max_steps >= 0, "train.max_steps must be >= 0");
  require(t.log_every >= 1, "train.log_every must be >= 1");
  require(t.kl_warmup_epochs >= 0 && std::isfinite(t.kl_warmup_epochs), "train.kl_warmup_epochs must be >= 0");

  const auto& e = c.eval;
  require(e.test_fraction > 0 && e.test_fraction < 1, "eval.test_fraction must be in (0, 1)");
  require(e.knn_k >= 1, "eval.knn_k must be >= 1");
  require(e.correlation == "pearson" || e.correlation == "spearman", "eval.correlation must be pearson or spearman");
  require(!e.ratios.empty(), "eval.ratios must not be empty");
  for (double r : e.ratios) require(r > 0 && r <= 1, "eval.ratios entries must be in (0, 1]");
}

std::string to_toml(const ExperimentConfig& config) { return toml::serialize(to_table(config)); }

ExperimentConfig from_toml(const std::string& text) {
  ExperimentConfig config;
  apply_table(config, toml::parse(text));
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_toml(ss.str());
}

void apply_ablation(LossWeights& weights, const std::string& name) {
  if (name == "mate-p") {
    weights.drop_private_kl = true;
  } else if (name == "mate-s") {
    weights.drop_shared_kl = true;
  } else if (name == "mate-r") {
    weights.drop_reconstruction = true;
  } else if (name == "mate-c") {
    weights.drop_alignment = true;
  } else if (name == "orthogonal") {
    weights.orthogonal_baseline = true;
  } else if (name != "none") {
    throw ConfigError("unknown ablation '" + name + "' (expected mate-p, mate-s, mate-r, mate-c, orthogonal, none)");
  }
}

}  // namespace mate
