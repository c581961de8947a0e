#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ppn/ppn.hpp"

namespace ppn::cli {

/// Invalid configuration or usage; reported with exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a run needs, serialized as one JSON document with the
/// sections "gen", "train", "eval" and "sweep".
struct RunConfig {
  GenSpec gen;
  TrainConfig train;
  EvalConfig eval;
  /// Parent weights 1 - lambda of the ablation.
  std::vector<double> sweep_weights{0.0, 0.3, 0.6, 0.9};

  void validate() const;
};

nlohmann::json to_json(const RunConfig& config);

/// Parses and validates a full or partial document; missing keys keep their
/// defaults. Throws ConfigError naming the offending key.
RunConfig config_from_json(const nlohmann::json& doc);

/// Dotted keys ("train.iterations", ...) of every leaf setting.
std::vector<std::string> config_keys();

/// Sets one dotted key in `doc` from command-line text. The text is read as
/// JSON when it parses, otherwise as a plain string.
void apply_override(nlohmann::json& doc, const std::string& key, const std::string& text);

}  // namespace ppn::cli
