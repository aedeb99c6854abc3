#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "gridmp/model.hpp"
#include "gridmp/train.hpp"

namespace gridmp {

/// Contents of a training config file:
///
///   [model]  hidden_dim, layers, attention_heads, random_features, mode, seed
///   [train]  learning_rate, weight_decay, epochs, batch_size, seed,
///            adam_beta1, adam_beta2, adam_eps
///
/// Every key is required unless an override supplies it.
struct RunConfig {
  nn::ModelConfig model;
  TrainConfig train;
};

/// Command-line values; set fields win over the file.
struct ConfigOverrides {
  std::optional<int> hidden_dim;
  std::optional<int> layers;
  std::optional<int> heads;
  std::optional<int> random_features;
  std::optional<std::string> mode;
  std::optional<std::uint64_t> model_seed;
  std::optional<double> learning_rate;
  std::optional<double> weight_decay;
  std::optional<int> epochs;
  std::optional<int> batch_size;
  std::optional<std::uint64_t> seed;
  std::optional<double> beta1;
  std::optional<double> beta2;
  std::optional<double> eps;
};

/// Throws ParseError on malformed TOML or mistyped values, ValidationError
/// naming the first missing key ("missing config key 'train.epochs'") or a
/// rejected value.
RunConfig parse_run_config(std::string_view toml_text, const ConfigOverrides& overrides = {},
                           std::string_view source = "config");
RunConfig load_run_config(const std::filesystem::path& path, const ConfigOverrides& overrides = {});

nlohmann::json run_config_to_json(const RunConfig& cfg);

}  // namespace gridmp
