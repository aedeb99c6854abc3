#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridmp/model.hpp"

namespace gridmp {

inline constexpr int kCheckpointFormat = 1;

struct OptimizerState {
  std::uint64_t step = 0;
  std::vector<Matrix> m;  // aligned with ModelState parameter order
  std::vector<Matrix> v;
};

struct CheckpointMeta {
  std::string lineage = "scratch";  // "scratch" or "pretrain:<source>"
  bool trained_on_outages = false;
  int epochs_completed = 0;
  double best_val_loss = 0.0;
  nlohmann::json train_config;  // snapshot, informational
  std::string best_checkpoint;  // resume files: the best-validation checkpoint of the run
};

struct Checkpoint {
  nn::ModelState state;
  CheckpointMeta meta;
  std::optional<OptimizerState> optimizer;
};

/// Writes the JSON manifest at `path` and the parameter blob (little-endian
/// float64, manifest order) at `path` + ".bin".
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

/// Throws IoError, ParseError, or ConfigMismatchError when names or shapes do
/// not match the configuration recorded in the manifest.
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::filesystem::path blob_path(const std::filesystem::path& manifest);

}  // namespace gridmp
