#pragma once

#include <array>
#include <span>
#include <string_view>
#include <vector>

#include "gridmp/grid.hpp"
#include "gridmp/sample.hpp"
#include "gridmp/tensor.hpp"

namespace gridmp {

enum class NodeType : int { Bus = 0, Generator, Load, Shunt };
inline constexpr int kNodeTypes = 4;

// Line/Transformer edges come in directed pairs (one per direction) and carry
// branch features. Connector pseudo-edges are featureless.
enum class EdgeType : int {
  Line = 0,
  Transformer,
  GenToBus,
  BusToGen,
  LoadToBus,
  BusToLoad,
  ShuntToBus,
  BusToShunt,
};
inline constexpr int kEdgeTypes = 8;

inline constexpr int kBusFeatures = 3;     // v_min, v_max, is_reference
inline constexpr int kGenFeatures = 7;     // pg_min, pg_max, qg_min, qg_max, a, b, c
inline constexpr int kLoadFeatures = 2;    // pd, qd
inline constexpr int kShuntFeatures = 2;   // gs, bs
inline constexpr int kBranchFeatures = 8;  // r, x, b_charge, tap, shift, s_max, ang_min, ang_max
inline constexpr int kPeDim = 5;

struct EdgeTypeInfo {
  NodeType src;
  NodeType dst;
  std::string_view name;
  bool has_features;
};

EdgeTypeInfo edge_type_info(EdgeType t);
std::string_view node_type_name(NodeType t);
int node_feature_dim(NodeType t);

inline int idx(NodeType t) { return static_cast<int>(t); }
inline int idx(EdgeType t) { return static_cast<int>(t); }

struct EdgeSet {
  std::vector<int> src;  // node positions within the source type
  std::vector<int> dst;  // node positions within the destination type
  Matrix features;       // rows = edges; zero columns for connectors

  int size() const { return static_cast<int>(src.size()); }
};

/// Network-facing view of one grid instance (or a disjoint batch of several).
struct HeteroGraph {
  std::array<Matrix, kNodeTypes> features;
  std::array<Matrix, kNodeTypes> pe;  // per node: PE of the bus it sits on
  std::array<EdgeSet, kEdgeTypes> edges;

  // offsets[t][g] is the first node of type t belonging to graph g; size num_graphs + 1.
  std::array<std::vector<int>, kNodeTypes> offsets;
  std::vector<int> reference_bus;  // bus node per graph

  // Provenance back into the source grid (single graphs only).
  std::vector<int> generator_index;
  std::vector<int> load_index;
  std::vector<int> shunt_index;

  int num_graphs() const { return static_cast<int>(reference_bus.size()); }
  int count(NodeType t) const { return static_cast<int>(features[idx(t)].rows()); }
  int total_nodes() const;
  /// Graph id of every node of type t.
  std::vector<int> graph_of(NodeType t) const;
};

/// Builds the graph for `sample` on `grid`. If the sample's outage component is
/// still enabled in `grid` it is applied first. `pe` holds one row of kPeDim
/// moments per bus. Disabled components are omitted.
/// Throws DimensionError on mismatched sample or PE shapes.
HeteroGraph to_hetero_graph(const PowerGrid& grid, const Sample& sample, const Matrix& pe);

/// Disjoint union; node and edge indices are shifted per graph.
HeteroGraph batch_graphs(std::span<const HeteroGraph* const> graphs);

}  // namespace gridmp
