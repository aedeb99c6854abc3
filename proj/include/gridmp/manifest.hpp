#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace gridmp {

inline constexpr const char* kArtifactVersion = "0.1.0";

struct InputDigest {
  std::string path;
  std::string sha256;
};

/// Run record written next to a command's outputs, on success and on failure.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  nlohmann::json config;
  std::vector<InputDigest> inputs;
  std::uint64_t seed = 0;
  std::string version = kArtifactVersion;
  std::vector<std::string> outputs;
  std::string started_at;
  std::string finished_at;
  std::string status = "running";  // "ok" or "error"
  int exit_code = 0;
  std::string error;
};

/// Lowercase hex SHA-256 of a file's bytes. Throws IoError.
std::string sha256_file(const std::filesystem::path& path);

/// Digests `path` and appends it to `m.inputs`.
void record_input(RunManifest& m, const std::filesystem::path& path);

/// ISO 8601 UTC, second resolution.
std::string utc_timestamp();

nlohmann::json manifest_to_json(const RunManifest& m);

/// Throws IoError.
void write_manifest(const RunManifest& m, const std::filesystem::path& path);

}  // namespace gridmp
