#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gridmp/grid.hpp"

namespace gridmp {

/// One labeled ACOPF instance. Generator labels cover every generator of the
/// base grid; an outaged generator carries zeros.
struct Sample {
  std::vector<std::pair<double, double>> load_values;  // per load (pd, qd), pu
  Outage outage;
  std::vector<double> label_theta;  // per bus, rad
  std::vector<double> label_vm;     // per bus, pu
  std::vector<double> label_pg;     // per generator, pu
  std::vector<double> label_qg;     // per generator, pu
  double label_cost = 0.0;          // $
};

/// Throws DimensionError if label arrays do not match the grid, or
/// ValidationError if an outaged generator carries nonzero labels.
void check_sample(const PowerGrid& base, const Sample& sample);

nlohmann::json sample_to_json(const Sample& s);
Sample sample_from_json(const nlohmann::json& doc);

/// Serialized with fixed 17-digit precision so files are byte-stable.
std::string sample_to_line(const Sample& s);

std::vector<Sample> load_samples(const std::filesystem::path& path);
void save_samples(const std::vector<Sample>& samples, const std::filesystem::path& path);

/// Base grid with the sample's outage applied and its loads substituted.
PowerGrid grid_for_sample(const PowerGrid& base, const Sample& sample);

struct DatasetSplit {
  std::vector<Sample> train;
  std::vector<Sample> val;
  std::vector<Sample> test;
};

/// Deterministic 90/5/5 shuffle-split; val and test get floor(5%), train the rest.
DatasetSplit split_dataset(const std::vector<Sample>& samples, std::uint64_t seed);

/// Index-level variant of split_dataset (same partition).
struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};
SplitIndices split_indices(std::size_t count, std::uint64_t seed);

/// Distinct topologies among samples that share one base grid.
std::size_t unique_topology_count(const std::vector<Sample>& samples);

}  // namespace gridmp
