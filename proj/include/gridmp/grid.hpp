#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace gridmp {

// All quantities are per-unit on PowerGrid::base_mva unless noted; angles in radians.

struct Bus {
  int id = 0;  // external label; internal references use positions
  double v_min = 0.9;
  double v_max = 1.1;
};

struct Generator {
  int bus = 0;
  double pg_min = 0.0;
  double pg_max = 0.0;
  double qg_min = 0.0;
  double qg_max = 0.0;
  double cost_a = 0.0;  // $/pu^2
  double cost_b = 0.0;  // $/pu
  double cost_c = 0.0;  // $
  bool enabled = true;
};

struct Load {
  int bus = 0;
  double pd = 0.0;
  double qd = 0.0;
};

struct Shunt {
  int bus = 0;
  double gs = 0.0;
  double bs = 0.0;
};

enum class BranchKind { Line, Transformer };

struct Branch {
  int from_bus = 0;
  int to_bus = 0;
  double r = 0.0;
  double x = 0.0;
  double b_charge = 0.0;
  double tap = 1.0;
  double shift = 0.0;
  double s_max = 0.0;
  double ang_min = -1.0;
  double ang_max = 1.0;
  BranchKind kind = BranchKind::Line;
  bool enabled = true;

  /// Series admittance 1/(r + jx).
  std::complex<double> series_admittance() const;
};

/// Heterogeneous physical grid. Bus references in generators, loads, shunts and
/// branches are positions into `buses`, as is `reference_bus`.
struct PowerGrid {
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Generator> generators;
  std::vector<Load> loads;
  std::vector<Shunt> shunts;
  std::vector<Branch> branches;
  int reference_bus = 0;

  int num_buses() const { return static_cast<int>(buses.size()); }
  std::vector<int> enabled_generators() const;
  std::vector<int> enabled_branches() const;
};

struct Outage {
  enum class Kind { None, Branch, Generator };
  Kind kind = Kind::None;
  int index = -1;

  static Outage none() { return {}; }
  static Outage branch(int i) { return {Kind::Branch, i}; }
  static Outage generator(int i) { return {Kind::Generator, i}; }

  bool is_none() const { return kind == Kind::None; }
  friend bool operator==(const Outage&, const Outage&) = default;
  friend auto operator<=>(const Outage&, const Outage&) = default;
};

std::string to_string(const Outage& outage);

/// Canonical hash over the enabled branch and generator sets of a grid. Enabled
/// branches contribute their endpoints and reactance so keys from different base
/// grids do not collide in a shared cache.
struct TopologyKey {
  std::uint64_t value = 0;
  friend bool operator==(const TopologyKey&, const TopologyKey&) = default;
  friend auto operator<=>(const TopologyKey&, const TopologyKey&) = default;
};

TopologyKey topology_key(const PowerGrid& grid);
std::string to_hex(const TopologyKey& key);

struct TopologyKeyHash {
  std::size_t operator()(const TopologyKey& k) const noexcept {
    return static_cast<std::size_t>(k.value);
  }
};

/// Throws ValidationError (with a field path) or DisconnectedError.
void validate(const PowerGrid& grid);

/// True if every bus is reachable from the reference bus over enabled branches.
bool is_connected(const PowerGrid& grid);

PowerGrid grid_from_json(const nlohmann::json& doc);
nlohmann::json grid_to_json(const PowerGrid& grid);

/// Reads and validates a grid file; physical units are converted to per-unit.
PowerGrid load_grid(const std::filesystem::path& path);
void save_grid(const PowerGrid& grid, const std::filesystem::path& path);

/// Returns a copy with the component disabled.
/// Throws ValidationError on a bad index, AlreadyDisabledError if the component is
/// already out, DisconnectedError if the grid splits, LastGeneratorError if no
/// enabled generator remains at the reference bus.
PowerGrid apply_outage(const PowerGrid& grid, const Outage& outage);

/// Copy of the grid with buses reordered: new position p holds old bus perm[p].
PowerGrid permute_buses(const PowerGrid& grid, const std::vector<int>& perm);

}  // namespace gridmp
