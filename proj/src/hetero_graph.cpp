#include "gridmp/hetero_graph.hpp"

#include "gridmp/errors.hpp"

namespace gridmp {

namespace {

bool component_enabled(const PowerGrid& g, const Outage& o) {
  switch (o.kind) {
    case Outage::Kind::None: return false;
    case Outage::Kind::Branch:
      return o.index >= 0 && o.index < static_cast<int>(g.branches.size()) && g.branches[o.index].enabled;
    case Outage::Kind::Generator:
      return o.index >= 0 && o.index < static_cast<int>(g.generators.size()) &&
             g.generators[o.index].enabled;
  }
  return false;
}

void add_connector_pair(HeteroGraph& hg, EdgeType to_bus, EdgeType from_bus, int node, int bus) {
  hg.edges[idx(to_bus)].src.push_back(node);
  hg.edges[idx(to_bus)].dst.push_back(bus);
  hg.edges[idx(from_bus)].src.push_back(bus);
  hg.edges[idx(from_bus)].dst.push_back(node);
}

}  // namespace

EdgeTypeInfo edge_type_info(EdgeType t) {
  switch (t) {
    case EdgeType::Line: return {NodeType::Bus, NodeType::Bus, "line", true};
    case EdgeType::Transformer: return {NodeType::Bus, NodeType::Bus, "transformer", true};
    case EdgeType::GenToBus: return {NodeType::Generator, NodeType::Bus, "gen_bus", false};
    case EdgeType::BusToGen: return {NodeType::Bus, NodeType::Generator, "bus_gen", false};
    case EdgeType::LoadToBus: return {NodeType::Load, NodeType::Bus, "load_bus", false};
    case EdgeType::BusToLoad: return {NodeType::Bus, NodeType::Load, "bus_load", false};
    case EdgeType::ShuntToBus: return {NodeType::Shunt, NodeType::Bus, "shunt_bus", false};
    case EdgeType::BusToShunt: return {NodeType::Bus, NodeType::Shunt, "bus_shunt", false};
  }
  return {NodeType::Bus, NodeType::Bus, "?", false};
}

std::string_view node_type_name(NodeType t) {
  switch (t) {
    case NodeType::Bus: return "bus";
    case NodeType::Generator: return "gen";
    case NodeType::Load: return "load";
    case NodeType::Shunt: return "shunt";
  }
  return "?";
}

int node_feature_dim(NodeType t) {
  switch (t) {
    case NodeType::Bus: return kBusFeatures;
    case NodeType::Generator: return kGenFeatures;
    case NodeType::Load: return kLoadFeatures;
    case NodeType::Shunt: return kShuntFeatures;
  }
  return 0;
}

int HeteroGraph::total_nodes() const {
  int n = 0;
  for (int t = 0; t < kNodeTypes; ++t) n += static_cast<int>(features[t].rows());
  return n;
}

std::vector<int> HeteroGraph::graph_of(NodeType t) const {
  const auto& off = offsets[idx(t)];
  std::vector<int> out(count(t));
  for (int g = 0; g + 1 < static_cast<int>(off.size()); ++g)
    for (int i = off[g]; i < off[g + 1]; ++i) out[i] = g;
  return out;
}

HeteroGraph to_hetero_graph(const PowerGrid& base, const Sample& sample, const Matrix& pe) {
  if (sample.load_values.size() != base.loads.size())
    throw DimensionError("to_hetero_graph: sample has " + std::to_string(sample.load_values.size()) +
                         " loads, grid has " + std::to_string(base.loads.size()));
  if (pe.rows() != base.num_buses() || pe.cols() != kPeDim)
    throw DimensionError("to_hetero_graph: positional encoding must be N x 5");

  const PowerGrid grid = component_enabled(base, sample.outage) ? apply_outage(base, sample.outage) : base;
  const int n_bus = grid.num_buses();

  HeteroGraph hg;
  hg.reference_bus = {grid.reference_bus};

  Matrix& bus = hg.features[idx(NodeType::Bus)];
  bus.resize(n_bus, kBusFeatures);
  for (int i = 0; i < n_bus; ++i)
    bus.row(i) << grid.buses[i].v_min, grid.buses[i].v_max, i == grid.reference_bus ? 1.0 : 0.0;

  std::vector<int> node_bus[kNodeTypes];
  for (int i = 0; i < n_bus; ++i) node_bus[idx(NodeType::Bus)].push_back(i);

  for (int gi : grid.enabled_generators()) {
    const Generator& g = grid.generators[gi];
    hg.generator_index.push_back(gi);
    node_bus[idx(NodeType::Generator)].push_back(g.bus);
  }
  Matrix& gen = hg.features[idx(NodeType::Generator)];
  gen.resize(static_cast<Eigen::Index>(hg.generator_index.size()), kGenFeatures);
  for (std::size_t k = 0; k < hg.generator_index.size(); ++k) {
    const Generator& g = grid.generators[hg.generator_index[k]];
    gen.row(static_cast<Eigen::Index>(k)) << g.pg_min, g.pg_max, g.qg_min, g.qg_max, g.cost_a, g.cost_b,
        g.cost_c;
    add_connector_pair(hg, EdgeType::GenToBus, EdgeType::BusToGen, static_cast<int>(k), g.bus);
  }

  Matrix& load = hg.features[idx(NodeType::Load)];
  load.resize(static_cast<Eigen::Index>(grid.loads.size()), kLoadFeatures);
  for (std::size_t k = 0; k < grid.loads.size(); ++k) {
    load.row(static_cast<Eigen::Index>(k)) << sample.load_values[k].first, sample.load_values[k].second;
    hg.load_index.push_back(static_cast<int>(k));
    node_bus[idx(NodeType::Load)].push_back(grid.loads[k].bus);
    add_connector_pair(hg, EdgeType::LoadToBus, EdgeType::BusToLoad, static_cast<int>(k), grid.loads[k].bus);
  }

  Matrix& shunt = hg.features[idx(NodeType::Shunt)];
  shunt.resize(static_cast<Eigen::Index>(grid.shunts.size()), kShuntFeatures);
  for (std::size_t k = 0; k < grid.shunts.size(); ++k) {
    shunt.row(static_cast<Eigen::Index>(k)) << grid.shunts[k].gs, grid.shunts[k].bs;
    hg.shunt_index.push_back(static_cast<int>(k));
    node_bus[idx(NodeType::Shunt)].push_back(grid.shunts[k].bus);
    add_connector_pair(hg, EdgeType::ShuntToBus, EdgeType::BusToShunt, static_cast<int>(k),
                       grid.shunts[k].bus);
  }

  std::vector<RowVector> branch_rows[2];
  for (int bi : grid.enabled_branches()) {
    const Branch& br = grid.branches[bi];
    const int t = br.kind == BranchKind::Line ? idx(EdgeType::Line) : idx(EdgeType::Transformer);
    RowVector f(kBranchFeatures);
    f << br.r, br.x, br.b_charge, br.tap, br.shift, br.s_max, br.ang_min, br.ang_max;
    EdgeSet& es = hg.edges[t];
    es.src.push_back(br.from_bus);
    es.dst.push_back(br.to_bus);
    es.src.push_back(br.to_bus);
    es.dst.push_back(br.from_bus);
    branch_rows[t].push_back(f);
    branch_rows[t].push_back(f);
  }
  for (int t = 0; t < kEdgeTypes; ++t) {
    EdgeSet& es = hg.edges[t];
    if (edge_type_info(static_cast<EdgeType>(t)).has_features) {
      es.features.resize(es.size(), kBranchFeatures);
      for (int e = 0; e < es.size(); ++e) es.features.row(e) = branch_rows[t][e];
    } else {
      es.features.resize(es.size(), 0);
    }
  }

  for (int t = 0; t < kNodeTypes; ++t) {
    const auto& nb = node_bus[t];
    hg.pe[t].resize(static_cast<Eigen::Index>(nb.size()), kPeDim);
    for (std::size_t k = 0; k < nb.size(); ++k) hg.pe[t].row(static_cast<Eigen::Index>(k)) = pe.row(nb[k]);
    hg.offsets[t] = {0, static_cast<int>(nb.size())};
  }
  return hg;
}

HeteroGraph batch_graphs(std::span<const HeteroGraph* const> graphs) {
  HeteroGraph out;
  std::array<Eigen::Index, kNodeTypes> rows{};
  std::array<Eigen::Index, kEdgeTypes> edge_rows{};
  for (const HeteroGraph* g : graphs) {
    for (int t = 0; t < kNodeTypes; ++t) rows[t] += g->features[t].rows();
    for (int t = 0; t < kEdgeTypes; ++t) edge_rows[t] += g->edges[t].size();
  }
  for (int t = 0; t < kNodeTypes; ++t) {
    const int dim = node_feature_dim(static_cast<NodeType>(t));
    out.features[t].resize(rows[t], dim);
    out.pe[t].resize(rows[t], kPeDim);
    out.offsets[t] = {0};
  }
  for (int t = 0; t < kEdgeTypes; ++t) {
    const bool feat = edge_type_info(static_cast<EdgeType>(t)).has_features;
    out.edges[t].features.resize(edge_rows[t], feat ? kBranchFeatures : 0);
    out.edges[t].src.reserve(edge_rows[t]);
    out.edges[t].dst.reserve(edge_rows[t]);
  }

  std::array<int, kNodeTypes> base{};
  std::array<Eigen::Index, kEdgeTypes> edge_base{};
  for (const HeteroGraph* g : graphs) {
    if (g->num_graphs() != 1) throw ShapeError("batch_graphs: inputs must be single graphs");
    for (int t = 0; t < kNodeTypes; ++t) {
      const auto n = g->features[t].rows();
      if (n > 0) {
        out.features[t].middleRows(base[t], n) = g->features[t];
        out.pe[t].middleRows(base[t], n) = g->pe[t];
      }
    }
    for (int t = 0; t < kEdgeTypes; ++t) {
      const EdgeSet& es = g->edges[t];
      const EdgeTypeInfo info = edge_type_info(static_cast<EdgeType>(t));
      for (int e = 0; e < es.size(); ++e) {
        out.edges[t].src.push_back(es.src[e] + base[idx(info.src)]);
        out.edges[t].dst.push_back(es.dst[e] + base[idx(info.dst)]);
      }
      if (info.has_features && es.size() > 0)
        out.edges[t].features.middleRows(edge_base[t], es.size()) = es.features;
      edge_base[t] += es.size();
    }
    out.reference_bus.push_back(g->reference_bus[0] + base[idx(NodeType::Bus)]);
    for (int t = 0; t < kNodeTypes; ++t) {
      base[t] += static_cast<int>(g->features[t].rows());
      out.offsets[t].push_back(base[t]);
    }
  }
  return out;
}

}  // namespace gridmp
