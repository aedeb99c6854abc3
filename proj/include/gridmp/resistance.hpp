#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <unordered_map>

#include "gridmp/grid.hpp"
#include "gridmp/tensor.hpp"

namespace gridmp {

/// Susceptance-weighted Laplacian: off-diagonal -sum(1/x) over enabled branches
/// between each pair, diagonal the row total. Throws ZeroReactanceError.
Matrix build_laplacian(const PowerGrid& grid);

/// Moore-Penrose pseudoinverse of a connected-graph Laplacian via (Q + J/N)^-1 - J/N.
/// Throws RankDeficientError if the weighted graph is disconnected.
Matrix laplacian_pseudoinverse(const Matrix& laplacian);

/// Pairwise effective resistance (e_i - e_j)^T Q+ (e_i - e_j). Values in
/// [-1e-10, 0) clamp to zero; anything more negative throws NegativeResistanceError.
Matrix effective_resistance(const Matrix& laplacian);

/// Per column i of omega: [min, max, population std, median, mean], N x 5.
Matrix pe_moments(const Matrix& omega);

/// Memoizes positional encodings by TopologyKey. Concurrent readers share a
/// lock; insertion is exclusive. An optional directory persists entries as CSV.
class PeCache {
 public:
  PeCache() = default;
  explicit PeCache(std::filesystem::path directory);

  /// build_laplacian -> effective_resistance -> pe_moments, memoized.
  std::shared_ptr<const Matrix> get(const PowerGrid& grid);

  std::size_t hits() const { return hits_.load(); }
  std::size_t misses() const { return misses_.load(); }
  std::size_t size() const;

 private:
  std::optional<Matrix> read_disk(const TopologyKey& key, int rows) const;
  void write_disk(const TopologyKey& key, const Matrix& pe) const;

  mutable std::shared_mutex mutex_;
  std::unordered_map<TopologyKey, std::shared_ptr<const Matrix>, TopologyKeyHash> entries_;
  std::optional<std::filesystem::path> directory_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
};

/// Convenience: positional encodings without caching.
Matrix positional_encoding(const PowerGrid& grid);

}  // namespace gridmp
