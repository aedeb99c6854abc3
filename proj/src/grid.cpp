#include "gridmp/grid.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "gridmp/errors.hpp"

namespace gridmp {

namespace {

using nlohmann::json;

class DisjointSets {
 public:
  explicit DisjointSets(int n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

  int find(int v) {
    while (parent_[v] != v) {
      parent_[v] = parent_[parent_[v]];
      v = parent_[v];
    }
    return v;
  }

  void unite(int a, int b) { parent_[find(a)] = find(b); }

 private:
  std::vector<int> parent_;
};

std::string path(const char* array, std::size_t i, const char* field) {
  std::ostringstream os;
  os << array << "[" << i << "]." << field;
  return os.str();
}

void require_finite(double v, const std::string& where) {
  if (!std::isfinite(v)) throw ValidationError(where + ": value is not finite");
}

void require_bus(const PowerGrid& g, int bus, const std::string& where) {
  if (bus < 0 || bus >= g.num_buses())
    throw ValidationError(where + ": references unknown bus");
}

template <typename T>
T get_field(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(where + "." + key + ": missing field");
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw ParseError(where + "." + key + ": " + e.what());
  }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  return get_field<T>(obj, key, where);
}

const json& get_array(const json& doc, const char* key, bool required) {
  static const json empty = json::array();
  auto it = doc.find(key);
  if (it == doc.end()) {
    if (required) throw ParseError(std::string(key) + ": missing array");
    return empty;
  }
  if (!it->is_array()) throw ParseError(std::string(key) + ": expected array");
  return *it;
}

std::uint64_t fnv1a(std::uint64_t h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xffu;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

std::complex<double> Branch::series_admittance() const {
  return 1.0 / std::complex<double>(r, x);
}

std::vector<int> PowerGrid::enabled_generators() const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(generators.size()); ++i)
    if (generators[i].enabled) out.push_back(i);
  return out;
}

std::vector<int> PowerGrid::enabled_branches() const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(branches.size()); ++i)
    if (branches[i].enabled) out.push_back(i);
  return out;
}

std::string to_string(const Outage& outage) {
  switch (outage.kind) {
    case Outage::Kind::None: return "none";
    case Outage::Kind::Branch: return "branch(" + std::to_string(outage.index) + ")";
    case Outage::Kind::Generator: return "generator(" + std::to_string(outage.index) + ")";
  }
  return "?";
}

TopologyKey topology_key(const PowerGrid& grid) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  h = fnv1a(h, static_cast<std::uint64_t>(grid.num_buses()));
  for (int b : grid.enabled_branches()) {
    const Branch& br = grid.branches[b];
    h = fnv1a(h, static_cast<std::uint64_t>(b));
    h = fnv1a(h, static_cast<std::uint64_t>(br.from_bus));
    h = fnv1a(h, static_cast<std::uint64_t>(br.to_bus));
    std::uint64_t xbits;
    static_assert(sizeof(xbits) == sizeof(br.x));
    std::memcpy(&xbits, &br.x, sizeof(xbits));
    h = fnv1a(h, xbits);
  }
  h = fnv1a(h, 0xffffffffffffffffull);
  for (int g : grid.enabled_generators()) h = fnv1a(h, static_cast<std::uint64_t>(g));
  return {h};
}

std::string to_hex(const TopologyKey& key) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << key.value;
  return os.str();
}

bool is_connected(const PowerGrid& grid) {
  const int n = grid.num_buses();
  if (n == 0) return false;
  DisjointSets sets(n);
  for (const Branch& br : grid.branches)
    if (br.enabled) sets.unite(br.from_bus, br.to_bus);
  const int root = sets.find(grid.reference_bus);
  for (int i = 0; i < n; ++i)
    if (sets.find(i) != root) return false;
  return true;
}

void validate(const PowerGrid& g) {
  if (!(g.base_mva > 0.0) || !std::isfinite(g.base_mva))
    throw ValidationError("base_mva: must be positive");
  if (g.buses.empty()) throw ValidationError("buses: grid has no buses");
  if (g.reference_bus < 0 || g.reference_bus >= g.num_buses())
    throw ValidationError("reference_bus: references unknown bus");

  for (std::size_t i = 0; i < g.buses.size(); ++i) {
    const Bus& b = g.buses[i];
    require_finite(b.v_min, path("buses", i, "v_min"));
    require_finite(b.v_max, path("buses", i, "v_max"));
    if (!(b.v_min > 0.0)) throw ValidationError(path("buses", i, "v_min") + ": must be positive");
    if (b.v_min > b.v_max) throw ValidationError(path("buses", i, "v_min") + ": exceeds v_max");
  }
  for (std::size_t i = 0; i < g.generators.size(); ++i) {
    const Generator& gen = g.generators[i];
    require_bus(g, gen.bus, path("generators", i, "bus"));
    for (auto [v, f] : {std::pair{gen.pg_min, "pg_min"}, {gen.pg_max, "pg_max"},
                        {gen.qg_min, "qg_min"}, {gen.qg_max, "qg_max"},
                        {gen.cost_a, "cost_a"}, {gen.cost_b, "cost_b"}, {gen.cost_c, "cost_c"}})
      require_finite(v, path("generators", i, f));
    if (gen.pg_min > gen.pg_max)
      throw ValidationError(path("generators", i, "pg_min") + ": exceeds pg_max");
    if (gen.qg_min > gen.qg_max)
      throw ValidationError(path("generators", i, "qg_min") + ": exceeds qg_max");
  }
  for (std::size_t i = 0; i < g.loads.size(); ++i) {
    require_bus(g, g.loads[i].bus, path("loads", i, "bus"));
    require_finite(g.loads[i].pd, path("loads", i, "pd"));
    require_finite(g.loads[i].qd, path("loads", i, "qd"));
  }
  for (std::size_t i = 0; i < g.shunts.size(); ++i) {
    require_bus(g, g.shunts[i].bus, path("shunts", i, "bus"));
    require_finite(g.shunts[i].gs, path("shunts", i, "gs"));
    require_finite(g.shunts[i].bs, path("shunts", i, "bs"));
  }
  for (std::size_t i = 0; i < g.branches.size(); ++i) {
    const Branch& br = g.branches[i];
    require_bus(g, br.from_bus, path("branches", i, "from_bus"));
    require_bus(g, br.to_bus, path("branches", i, "to_bus"));
    if (br.from_bus == br.to_bus)
      throw ValidationError(path("branches", i, "to_bus") + ": equals from_bus");
    for (auto [v, f] : {std::pair{br.r, "r"}, {br.x, "x"}, {br.b_charge, "b_charge"},
                        {br.tap, "tap"}, {br.shift, "shift"}, {br.s_max, "s_max"},
                        {br.ang_min, "ang_min"}, {br.ang_max, "ang_max"}})
      require_finite(v, path("branches", i, f));
    if (!(br.r * br.r + br.x * br.x > 0.0))
      throw ValidationError(path("branches", i, "x") + ": zero series impedance");
    if (br.kind == BranchKind::Transformer) {
      if (!(br.tap > 0.0)) throw ValidationError(path("branches", i, "tap") + ": must be positive");
    } else {
      if (br.tap != 1.0) throw ValidationError(path("branches", i, "tap") + ": lines require tap = 1");
      if (br.shift != 0.0)
        throw ValidationError(path("branches", i, "shift") + ": lines require shift = 0");
    }
    if (br.ang_min > br.ang_max)
      throw ValidationError(path("branches", i, "ang_min") + ": exceeds ang_max");
    if (!(br.s_max > 0.0)) throw ValidationError(path("branches", i, "s_max") + ": must be positive");
  }
  if (!is_connected(g))
    throw DisconnectedError("branches: enabled branches do not connect every bus");
}

PowerGrid grid_from_json(const json& doc) {
  if (!doc.is_object()) throw ParseError("grid document must be a JSON object");
  PowerGrid g;
  g.base_mva = get_field<double>(doc, "base_mva", "grid");
  const std::string units = get_or<std::string>(doc, "units", "pu", "grid");
  if (units != "pu" && units != "physical")
    throw ParseError("units: expected \"pu\" or \"physical\", got \"" + units + "\"");

  std::unordered_map<int, int> position;
  const json& buses = get_array(doc, "buses", true);
  for (std::size_t i = 0; i < buses.size(); ++i) {
    const std::string where = "buses[" + std::to_string(i) + "]";
    Bus b;
    b.id = get_field<int>(buses[i], "id", where);
    b.v_min = get_field<double>(buses[i], "v_min", where);
    b.v_max = get_field<double>(buses[i], "v_max", where);
    if (!position.emplace(b.id, static_cast<int>(i)).second)
      throw ValidationError(where + ".id: duplicate bus id");
    g.buses.push_back(b);
  }
  // Unknown ids map to -1 so validate() reports them with their field path.
  auto bus_pos = [&](int id) {
    auto it = position.find(id);
    return it == position.end() ? -1 : it->second;
  };
  g.reference_bus = bus_pos(get_field<int>(doc, "reference_bus", "grid"));

  for (const json& item : get_array(doc, "generators", false)) {
    const std::string where = "generators[" + std::to_string(g.generators.size()) + "]";
    Generator gen;
    gen.bus = bus_pos(get_field<int>(item, "bus", where));
    gen.pg_min = get_field<double>(item, "pg_min", where);
    gen.pg_max = get_field<double>(item, "pg_max", where);
    gen.qg_min = get_field<double>(item, "qg_min", where);
    gen.qg_max = get_field<double>(item, "qg_max", where);
    gen.cost_a = get_or<double>(item, "cost_a", 0.0, where);
    gen.cost_b = get_or<double>(item, "cost_b", 0.0, where);
    gen.cost_c = get_or<double>(item, "cost_c", 0.0, where);
    gen.enabled = get_or<bool>(item, "enabled", true, where);
    g.generators.push_back(gen);
  }
  for (const json& item : get_array(doc, "loads", false)) {
    const std::string where = "loads[" + std::to_string(g.loads.size()) + "]";
    g.loads.push_back({bus_pos(get_field<int>(item, "bus", where)),
                       get_field<double>(item, "pd", where), get_field<double>(item, "qd", where)});
  }
  for (const json& item : get_array(doc, "shunts", false)) {
    const std::string where = "shunts[" + std::to_string(g.shunts.size()) + "]";
    g.shunts.push_back({bus_pos(get_field<int>(item, "bus", where)),
                        get_field<double>(item, "gs", where), get_field<double>(item, "bs", where)});
  }
  for (const json& item : get_array(doc, "branches", true)) {
    const std::string where = "branches[" + std::to_string(g.branches.size()) + "]";
    Branch br;
    br.from_bus = bus_pos(get_field<int>(item, "from_bus", where));
    br.to_bus = bus_pos(get_field<int>(item, "to_bus", where));
    br.r = get_field<double>(item, "r", where);
    br.x = get_field<double>(item, "x", where);
    br.b_charge = get_or<double>(item, "b_charge", 0.0, where);
    br.tap = get_or<double>(item, "tap", 1.0, where);
    br.shift = get_or<double>(item, "shift", 0.0, where);
    br.s_max = get_field<double>(item, "s_max", where);
    br.ang_min = get_or<double>(item, "ang_min", -M_PI / 3.0, where);
    br.ang_max = get_or<double>(item, "ang_max", M_PI / 3.0, where);
    const std::string kind = get_or<std::string>(item, "kind", "line", where);
    if (kind == "line") {
      br.kind = BranchKind::Line;
    } else if (kind == "transformer") {
      br.kind = BranchKind::Transformer;
    } else {
      throw ParseError(where + ".kind: expected \"line\" or \"transformer\"");
    }
    br.enabled = get_or<bool>(item, "enabled", true, where);
    g.branches.push_back(br);
  }

  if (units == "physical") {
    // Powers in MW/MVAr, costs in $/MW^2 and $/MW; impedances already per-unit.
    const double base = g.base_mva;
    for (Generator& gen : g.generators) {
      gen.pg_min /= base;
      gen.pg_max /= base;
      gen.qg_min /= base;
      gen.qg_max /= base;
      gen.cost_a *= base * base;
      gen.cost_b *= base;
    }
    for (Load& l : g.loads) {
      l.pd /= base;
      l.qd /= base;
    }
    for (Shunt& s : g.shunts) {
      s.gs /= base;
      s.bs /= base;
    }
    for (Branch& br : g.branches) br.s_max /= base;
  }
  return g;
}

json grid_to_json(const PowerGrid& g) {
  json doc;
  doc["base_mva"] = g.base_mva;
  doc["units"] = "pu";
  doc["reference_bus"] = g.buses.at(g.reference_bus).id;
  auto id = [&](int pos) { return g.buses.at(pos).id; };
  doc["buses"] = json::array();
  for (const Bus& b : g.buses) doc["buses"].push_back({{"id", b.id}, {"v_min", b.v_min}, {"v_max", b.v_max}});
  doc["generators"] = json::array();
  for (const Generator& gen : g.generators)
    doc["generators"].push_back({{"bus", id(gen.bus)},
                                 {"pg_min", gen.pg_min},
                                 {"pg_max", gen.pg_max},
                                 {"qg_min", gen.qg_min},
                                 {"qg_max", gen.qg_max},
                                 {"cost_a", gen.cost_a},
                                 {"cost_b", gen.cost_b},
                                 {"cost_c", gen.cost_c},
                                 {"enabled", gen.enabled}});
  doc["loads"] = json::array();
  for (const Load& l : g.loads) doc["loads"].push_back({{"bus", id(l.bus)}, {"pd", l.pd}, {"qd", l.qd}});
  doc["shunts"] = json::array();
  for (const Shunt& s : g.shunts) doc["shunts"].push_back({{"bus", id(s.bus)}, {"gs", s.gs}, {"bs", s.bs}});
  doc["branches"] = json::array();
  for (const Branch& br : g.branches)
    doc["branches"].push_back({{"from_bus", id(br.from_bus)},
                               {"to_bus", id(br.to_bus)},
                               {"r", br.r},
                               {"x", br.x},
                               {"b_charge", br.b_charge},
                               {"tap", br.tap},
                               {"shift", br.shift},
                               {"s_max", br.s_max},
                               {"ang_min", br.ang_min},
                               {"ang_max", br.ang_max},
                               {"kind", br.kind == BranchKind::Line ? "line" : "transformer"},
                               {"enabled", br.enabled}});
  return doc;
}

PowerGrid load_grid(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open grid file " + file.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(file.string() + ": " + e.what());
  }
  PowerGrid g = grid_from_json(doc);
  validate(g);
  return g;
}

void save_grid(const PowerGrid& grid, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write grid file " + file.string());
  out << grid_to_json(grid).dump(2) << "\n";
}

PowerGrid apply_outage(const PowerGrid& grid, const Outage& outage) {
  PowerGrid out = grid;
  switch (outage.kind) {
    case Outage::Kind::None:
      return out;
    case Outage::Kind::Branch: {
      if (outage.index < 0 || outage.index >= static_cast<int>(grid.branches.size()))
        throw ValidationError("outage: branch index out of range");
      Branch& br = out.branches[outage.index];
      if (!br.enabled) throw AlreadyDisabledError("outage: " + to_string(outage) + " already disabled");
      br.enabled = false;
      if (!is_connected(out))
        throw DisconnectedError("outage: " + to_string(outage) + " splits the grid");
      return out;
    }
    case Outage::Kind::Generator: {
      if (outage.index < 0 || outage.index >= static_cast<int>(grid.generators.size()))
        throw ValidationError("outage: generator index out of range");
      Generator& gen = out.generators[outage.index];
      if (!gen.enabled)
        throw AlreadyDisabledError("outage: " + to_string(outage) + " already disabled");
      gen.enabled = false;
      auto count_at = [](const PowerGrid& g, int bus) {
        int n = 0;
        for (const Generator& x : g.generators) n += (x.enabled && (bus < 0 || x.bus == bus)) ? 1 : 0;
        return n;
      };
      if (count_at(out, -1) == 0)
        throw LastGeneratorError("outage: " + to_string(outage) + " leaves no enabled generator");
      if (count_at(grid, grid.reference_bus) > 0 && count_at(out, grid.reference_bus) == 0)
        throw LastGeneratorError("outage: " + to_string(outage) +
                                 " removes the last generator at the reference bus");
      return out;
    }
  }
  return out;
}

PowerGrid permute_buses(const PowerGrid& grid, const std::vector<int>& perm) {
  const int n = grid.num_buses();
  if (static_cast<int>(perm.size()) != n) throw DimensionError("permute_buses: permutation size");
  std::vector<int> new_pos(n, -1);
  for (int p = 0; p < n; ++p) new_pos.at(perm[p]) = p;
  PowerGrid out = grid;
  for (int p = 0; p < n; ++p) out.buses[p] = grid.buses[perm[p]];
  out.reference_bus = new_pos[grid.reference_bus];
  for (Generator& g : out.generators) g.bus = new_pos[g.bus];
  for (Load& l : out.loads) l.bus = new_pos[l.bus];
  for (Shunt& s : out.shunts) s.bus = new_pos[s.bus];
  for (Branch& br : out.branches) {
    br.from_bus = new_pos[br.from_bus];
    br.to_bus = new_pos[br.to_bus];
  }
  return out;
}

}  // namespace gridmp
