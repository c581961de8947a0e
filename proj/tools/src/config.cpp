#include "ppn_cli/config.hpp"

#include <algorithm>
#include <type_traits>

namespace ppn::cli {

using nlohmann::json;

namespace {

json lambda_map_json(const std::map<int, double>& m) {
  json out = json::object();
  for (const auto& [shot, lambda] : m) out[std::to_string(shot)] = lambda;
  return out;
}

// Reads doc[section][key] into `target` when present. Integer targets accept
// only integer literals, and unsigned targets only non-negative ones, so
// that "-1" never wraps around.
template <typename T>
void read(const json& doc, const char* section, const char* key, T& target) {
  if (!doc.contains(section) || !doc.at(section).contains(key)) return;
  const json& v = doc.at(section).at(key);
  const std::string name = std::string(section) + "." + key;
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(name + " must be true or false");
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!v.is_number_unsigned()) throw ConfigError(name + " must be a non-negative integer");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(name + " must be an integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(name + " must be a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(name + " must be a string");
    }
    target = v.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(name + ": " + e.what());
  }
}

void check_keys(const json& doc, const json& defaults) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [section, body] : doc.items()) {
    if (!defaults.contains(section)) throw ConfigError("unknown config section '" + section + "'");
    if (!body.is_object()) throw ConfigError("config section '" + section + "' must be an object");
    for (const auto& [key, value] : body.items()) {
      if (!defaults.at(section).contains(key)) throw ConfigError("unknown config key '" + section + "." + key + "'");
    }
  }
}

template <typename F>
void validated(const char* what, F&& check) {
  try {
    check();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
}

}  // namespace

void RunConfig::validate() const {
  validated("gen", [&] { gen.validate(); });
  validated("train", [&] { train.validate(); });
  if (eval.n_way < 2) throw ConfigError("eval.n_way must be at least 2");
  if (eval.k_shot == 0 || eval.q_query == 0) throw ConfigError("eval.k_shot and eval.q_query must be positive");
  if (eval.n_tasks == 0) throw ConfigError("eval.n_tasks must be positive");
  if (eval.k_parents == 0) throw ConfigError("eval.k_parents must be positive");
  if (eval.workers == 0) throw ConfigError("eval.workers must be positive");
  if (sweep_weights.empty()) throw ConfigError("sweep.weights must not be empty");
  for (double w : sweep_weights) {
    if (!(w >= 0.0 && w <= 1.0)) throw ConfigError("sweep weight " + std::to_string(w) + " is outside [0, 1]");
  }
}

json to_json(const RunConfig& c) {
  const TrainConfig& t = c.train;
  return {
      {"gen",
       {{"depth", c.gen.depth},
        {"branching", c.gen.branching},
        {"multi_parent_prob", c.gen.multi_parent_prob},
        {"input_dim", c.gen.input_dim},
        {"sigma_level", c.gen.sigma_level},
        {"sigma_sample", c.gen.sigma_sample},
        {"samples_per_leaf", c.gen.samples_per_leaf},
        {"weak_candidates", c.gen.weak_candidates},
        {"weak_keep_base", c.gen.weak_keep_base},
        {"test_fraction", c.gen.test_fraction},
        {"mix_fraction", c.gen.mix_fraction},
        {"seed", c.gen.seed}}},
      {"train",
       {{"iterations", t.iterations},
        {"refresh_every", t.refresh_every},
        {"lambda_by_shot", lambda_map_json(t.lambda_by_shot)},
        {"shot", t.shot},
        {"lambda", t.lambda ? json(*t.lambda) : json(nullptr)},
        {"n_leaves", t.n_leaves},
        {"batch_per_class", t.batch_per_class},
        {"min_classes", t.min_classes},
        {"lr", t.schedule.initial_lr},
        {"lr_decay_factor", t.schedule.decay_factor},
        {"lr_decay_start", t.schedule.decay_start},
        {"lr_decay_every", t.schedule.decay_every},
        {"beta1", t.adam.beta1},
        {"beta2", t.adam.beta2},
        {"epsilon", t.adam.epsilon},
        {"weight_decay", t.adam.weight_decay},
        {"seed", t.seed},
        {"buffer_mode", buffer_mode_name(t.buffer_mode)},
        {"softmax_parents", t.softmax_parents},
        {"hidden_dim", t.backbone.hidden_dim},
        {"output_dim", t.backbone.output_dim},
        {"layers", t.backbone.layers},
        {"checkpoint_every", t.checkpoint_every}}},
      {"eval",
       {{"setting", setting_name(c.eval.setting)},
        {"n_way", c.eval.n_way},
        {"k_shot", c.eval.k_shot},
        {"q_query", c.eval.q_query},
        {"n_tasks", c.eval.n_tasks},
        {"k_parents", c.eval.k_parents},
        {"seed", c.eval.seed},
        {"workers", c.eval.workers}}},
      {"sweep", {{"weights", c.sweep_weights}}},
  };
}

RunConfig config_from_json(const json& doc) {
  RunConfig c;
  check_keys(doc, to_json(c));

  read(doc, "gen", "depth", c.gen.depth);
  read(doc, "gen", "branching", c.gen.branching);
  read(doc, "gen", "multi_parent_prob", c.gen.multi_parent_prob);
  read(doc, "gen", "input_dim", c.gen.input_dim);
  read(doc, "gen", "sigma_level", c.gen.sigma_level);
  read(doc, "gen", "sigma_sample", c.gen.sigma_sample);
  read(doc, "gen", "samples_per_leaf", c.gen.samples_per_leaf);
  read(doc, "gen", "weak_candidates", c.gen.weak_candidates);
  read(doc, "gen", "weak_keep_base", c.gen.weak_keep_base);
  read(doc, "gen", "test_fraction", c.gen.test_fraction);
  read(doc, "gen", "mix_fraction", c.gen.mix_fraction);
  read(doc, "gen", "seed", c.gen.seed);

  TrainConfig& t = c.train;
  read(doc, "train", "iterations", t.iterations);
  read(doc, "train", "refresh_every", t.refresh_every);
  if (doc.contains("train") && doc["train"].contains("lambda_by_shot")) {
    const json& m = doc["train"]["lambda_by_shot"];
    if (!m.is_object()) throw ConfigError("train.lambda_by_shot must map shot counts to lambda");
    t.lambda_by_shot.clear();
    for (const auto& [shot, lambda] : m.items()) {
      int k = 0;
      try {
        std::size_t used = 0;
        k = std::stoi(shot, &used);
        if (used != shot.size()) throw std::invalid_argument(shot);
      } catch (const std::exception&) {
        throw ConfigError("train.lambda_by_shot key '" + shot + "' is not a shot count");
      }
      if (!lambda.is_number()) throw ConfigError("train.lambda_by_shot." + shot + " must be a number");
      t.lambda_by_shot[k] = lambda.get<double>();
    }
  }
  read(doc, "train", "shot", t.shot);
  if (doc.contains("train") && doc["train"].contains("lambda")) {
    const json& v = doc["train"]["lambda"];
    if (v.is_null()) {
      t.lambda.reset();
    } else if (v.is_number()) {
      t.lambda = v.get<double>();
    } else {
      throw ConfigError("train.lambda must be a number or null");
    }
  }
  read(doc, "train", "n_leaves", t.n_leaves);
  read(doc, "train", "batch_per_class", t.batch_per_class);
  read(doc, "train", "min_classes", t.min_classes);
  read(doc, "train", "lr", t.schedule.initial_lr);
  read(doc, "train", "lr_decay_factor", t.schedule.decay_factor);
  read(doc, "train", "lr_decay_start", t.schedule.decay_start);
  read(doc, "train", "lr_decay_every", t.schedule.decay_every);
  read(doc, "train", "beta1", t.adam.beta1);
  read(doc, "train", "beta2", t.adam.beta2);
  read(doc, "train", "epsilon", t.adam.epsilon);
  read(doc, "train", "weight_decay", t.adam.weight_decay);
  read(doc, "train", "seed", t.seed);
  std::string mode = buffer_mode_name(t.buffer_mode);
  read(doc, "train", "buffer_mode", mode);
  validated("train.buffer_mode", [&] { t.buffer_mode = parse_buffer_mode(mode); });
  read(doc, "train", "softmax_parents", t.softmax_parents);
  read(doc, "train", "hidden_dim", t.backbone.hidden_dim);
  read(doc, "train", "output_dim", t.backbone.output_dim);
  read(doc, "train", "layers", t.backbone.layers);
  read(doc, "train", "checkpoint_every", t.checkpoint_every);
  // The backbone reads whatever the data provides; gen.input_dim is the
  // natural default when training on freshly generated data.
  t.backbone.input_dim = c.gen.input_dim;

  std::string setting = setting_name(c.eval.setting);
  read(doc, "eval", "setting", setting);
  validated("eval.setting", [&] { c.eval.setting = parse_setting(setting); });
  read(doc, "eval", "n_way", c.eval.n_way);
  read(doc, "eval", "k_shot", c.eval.k_shot);
  read(doc, "eval", "q_query", c.eval.q_query);
  read(doc, "eval", "n_tasks", c.eval.n_tasks);
  read(doc, "eval", "k_parents", c.eval.k_parents);
  read(doc, "eval", "seed", c.eval.seed);
  read(doc, "eval", "workers", c.eval.workers);

  if (doc.contains("sweep") && doc["sweep"].contains("weights")) {
    const json& w = doc["sweep"]["weights"];
    if (!w.is_array() || !std::all_of(w.begin(), w.end(), [](const json& x) { return x.is_number(); })) {
      throw ConfigError("sweep.weights must be an array of numbers");
    }
    c.sweep_weights = w.get<std::vector<double>>();
  }

  c.validate();
  return c;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  const json defaults = to_json(RunConfig{});
  for (const auto& [section, body] : defaults.items()) {
    for (const auto& [key, value] : body.items()) keys.push_back(section + "." + key);
  }
  return keys;
}

void apply_override(json& doc, const std::string& key, const std::string& text) {
  const auto dot = key.find('.');
  if (dot == std::string::npos) throw ConfigError("config key '" + key + "' must look like section.name");
  json value = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (value.is_discarded()) value = text;
  doc[key.substr(0, dot)][key.substr(dot + 1)] = std::move(value);
}

}  // namespace ppn::cli
