#include "gridmp/resistance.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <sstream>

#include "gridmp/errors.hpp"

namespace gridmp {

Matrix build_laplacian(const PowerGrid& grid) {
  const int n = grid.num_buses();
  Matrix q = Matrix::Zero(n, n);
  for (std::size_t k = 0; k < grid.branches.size(); ++k) {
    const Branch& br = grid.branches[k];
    if (!br.enabled) continue;
    if (br.x == 0.0) throw ZeroReactanceError("build_laplacian: branches[" + std::to_string(k) + "] has x = 0");
    const double b = 1.0 / br.x;
    q(br.from_bus, br.to_bus) -= b;
    q(br.to_bus, br.from_bus) -= b;
  }
  // Diagonal from the off-diagonal row sums so rows add to exactly zero.
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < n; ++j)
      if (j != i) s -= q(i, j);
    q(i, i) = s;
  }
  return q;
}

Matrix laplacian_pseudoinverse(const Matrix& q) {
  const auto n = q.rows();
  if (q.cols() != n || n == 0) throw ShapeError("laplacian_pseudoinverse: expected a square non-empty matrix");

  // Structural connectivity over nonzero off-diagonals.
  std::vector<int> comp(static_cast<std::size_t>(n), -1);
  std::vector<Eigen::Index> stack{0};
  comp[0] = 0;
  while (!stack.empty()) {
    const Eigen::Index i = stack.back();
    stack.pop_back();
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i && q(i, j) != 0.0 && comp[j] < 0) {
        comp[j] = 0;
        stack.push_back(j);
      }
  }
  if (std::any_of(comp.begin(), comp.end(), [](int c) { return c < 0; }))
    throw RankDeficientError("laplacian_pseudoinverse: graph is disconnected (rank < N - 1)");

  const double inv_n = 1.0 / static_cast<double>(n);
  Matrix shifted = q.array() + inv_n;
  Eigen::LDLT<Matrix> ldlt(shifted);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw RankDeficientError("laplacian_pseudoinverse: shifted Laplacian is not positive definite");
  Matrix inv = ldlt.solve(Matrix::Identity(n, n));
  inv.array() -= inv_n;
  return 0.5 * (inv + inv.transpose());
}

Matrix effective_resistance(const Matrix& q) {
  const Matrix qp = laplacian_pseudoinverse(q);
  const auto n = q.rows();
  Matrix omega = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      double w = qp(i, i) + qp(j, j) - 2.0 * qp(i, j);
      if (w < 0.0) {
        if (w < -1e-10)
          throw NegativeResistanceError("effective_resistance: negative resistance " + std::to_string(w));
        w = 0.0;
      }
      omega(i, j) = w;
      omega(j, i) = w;
    }
  return omega;
}

Matrix pe_moments(const Matrix& omega) {
  const auto n = omega.rows();
  Matrix pe(n, 5);
  std::vector<double> col(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) col[j] = omega(j, i);
    std::sort(col.begin(), col.end());
    const double mean = std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(n);
    double var = 0.0;
    for (double v : col) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const std::size_t mid = col.size() / 2;
    const double median = col.size() % 2 ? col[mid] : 0.5 * (col[mid - 1] + col[mid]);
    pe.row(i) << col.front(), col.back(), std::sqrt(var), median, mean;
  }
  return pe;
}

Matrix positional_encoding(const PowerGrid& grid) {
  return pe_moments(effective_resistance(build_laplacian(grid)));
}

PeCache::PeCache(std::filesystem::path directory) : directory_(std::move(directory)) {
  std::filesystem::create_directories(*directory_);
}

std::size_t PeCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

std::shared_ptr<const Matrix> PeCache::get(const PowerGrid& grid) {
  const TopologyKey key = topology_key(grid);
  {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(key);
    if (it != entries_.end()) {
      ++hits_;
      return it->second;
    }
  }
  std::optional<Matrix> pe = read_disk(key, grid.num_buses());
  if (!pe) {
    pe = positional_encoding(grid);
    write_disk(key, *pe);
  }
  auto value = std::make_shared<const Matrix>(std::move(*pe));
  std::unique_lock lock(mutex_);
  auto [it, inserted] = entries_.emplace(key, value);
  if (inserted) {
    ++misses_;
  } else {
    ++hits_;
  }
  return it->second;
}

std::optional<Matrix> PeCache::read_disk(const TopologyKey& key, int rows) const {
  if (!directory_) return std::nullopt;
  std::ifstream in(*directory_ / ("pe_" + to_hex(key) + ".csv"));
  if (!in) return std::nullopt;
  Matrix pe(rows, 5);
  std::string line;
  for (int r = 0; r < rows; ++r) {
    if (!std::getline(in, line)) return std::nullopt;
    std::istringstream row(line);
    for (int c = 0; c < 5; ++c) {
      std::string cell;
      if (!std::getline(row, cell, ',')) return std::nullopt;
      pe(r, c) = std::stod(cell);
    }
  }
  return pe;
}

void PeCache::write_disk(const TopologyKey& key, const Matrix& pe) const {
  if (!directory_) return;
  const auto final_path = *directory_ / ("pe_" + to_hex(key) + ".csv");
  const auto tmp = final_path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) return;
    out << std::setprecision(17);
    for (Eigen::Index r = 0; r < pe.rows(); ++r)
      out << pe(r, 0) << ',' << pe(r, 1) << ',' << pe(r, 2) << ',' << pe(r, 3) << ',' << pe(r, 4) << '\n';
  }
  std::error_code ec;
  std::filesystem::rename(tmp, final_path, ec);
}

}  // namespace gridmp
