#pragma once

#include <random>
#include <vector>

#include "gridmp/grid.hpp"
#include "gridmp/hetero_graph.hpp"
#include "gridmp/resistance.hpp"
#include "gridmp/sample.hpp"

namespace fixtures {

using namespace gridmp;

inline Branch line(int from, int to, double r, double x, double b = 0.0, double s_max = 5.0) {
  Branch br;
  br.from_bus = from;
  br.to_bus = to;
  br.r = r;
  br.x = x;
  br.b_charge = b;
  br.s_max = s_max;
  br.ang_min = -1.0472;
  br.ang_max = 1.0472;
  return br;
}

inline Generator gen(int bus, double pg_max, double qg_abs, double a, double b, double c = 0.0) {
  Generator g;
  g.bus = bus;
  g.pg_min = 0.0;
  g.pg_max = pg_max;
  g.qg_min = -qg_abs;
  g.qg_max = qg_abs;
  g.cost_a = a;
  g.cost_b = b;
  g.cost_c = c;
  return g;
}

inline PowerGrid make_buses(int n) {
  PowerGrid g;
  for (int i = 0; i < n; ++i) g.buses.push_back(Bus{i + 1, 0.94, 1.06});
  return g;
}

/// Lossless two-bus system: generator at bus 0, load at bus 1, x = 0.5.
inline PowerGrid two_bus(double pd = 0.5, double qd = 0.1, double r = 0.0, double x = 0.5) {
  PowerGrid g = make_buses(2);
  g.generators.push_back(gen(0, 3.0, 3.0, 2.0, 10.0, 1.0));
  g.loads.push_back(Load{1, pd, qd});
  g.branches.push_back(line(0, 1, r, x));
  return g;
}

/// Triangle (one side a transformer) with generators at buses 0 and 1, a load and shunt at bus 2.
inline PowerGrid three_bus() {
  PowerGrid g = make_buses(3);
  g.generators.push_back(gen(0, 2.0, 1.5, 1.0, 12.0, 0.5));
  g.generators.push_back(gen(1, 1.5, 1.0, 2.0, 15.0, 0.2));
  g.loads.push_back(Load{2, 1.2, 0.3});
  g.shunts.push_back(Shunt{2, 0.0, 0.05});
  g.branches.push_back(line(0, 1, 0.01, 0.1, 0.02));
  g.branches.push_back(line(1, 2, 0.02, 0.15, 0.02));
  Branch t = line(0, 2, 0.0, 0.12);
  t.kind = BranchKind::Transformer;
  t.tap = 1.01;
  g.branches.push_back(t);
  return g;
}

/// Ring of four buses plus a chord; two generators share the reference bus.
inline PowerGrid four_bus() {
  PowerGrid g = make_buses(4);
  g.generators.push_back(gen(0, 1.5, 1.0, 1.5, 11.0, 0.3));
  g.generators.push_back(gen(0, 1.0, 0.8, 2.5, 13.0, 0.1));
  g.generators.push_back(gen(2, 1.2, 0.8, 2.0, 12.0, 0.2));
  g.loads.push_back(Load{1, 0.9, 0.25});
  g.loads.push_back(Load{3, 1.1, 0.3});
  g.shunts.push_back(Shunt{3, 0.0, 0.04});
  g.branches.push_back(line(0, 1, 0.01, 0.08, 0.02));
  g.branches.push_back(line(1, 2, 0.012, 0.1, 0.02));
  g.branches.push_back(line(2, 3, 0.01, 0.09, 0.02));
  g.branches.push_back(line(3, 0, 0.015, 0.11, 0.02));
  Branch t = line(0, 2, 0.0, 0.2);
  t.kind = BranchKind::Transformer;
  t.tap = 1.02;
  g.branches.push_back(t);
  return g;
}

/// Six-bus meshed system: three generator buses (two units at the reference),
/// three load buses, one shunt, one transformer.
inline PowerGrid six_bus() {
  PowerGrid g = make_buses(6);
  g.generators.push_back(gen(0, 2.0, 1.5, 1.0, 11.0, 0.5));
  g.generators.push_back(gen(0, 1.0, 0.8, 2.0, 14.0, 0.2));
  g.generators.push_back(gen(1, 1.5, 1.2, 1.5, 12.0, 0.3));
  g.generators.push_back(gen(2, 1.2, 1.0, 3.0, 10.0, 0.1));
  g.loads.push_back(Load{3, 1.0, 0.3});
  g.loads.push_back(Load{4, 1.2, 0.35});
  g.loads.push_back(Load{5, 0.9, 0.25});
  g.shunts.push_back(Shunt{4, 0.0, 0.05});
  g.branches.push_back(line(0, 1, 0.01, 0.1, 0.02));
  g.branches.push_back(line(0, 3, 0.012, 0.12, 0.02));
  g.branches.push_back(line(0, 4, 0.01, 0.11, 0.02));
  g.branches.push_back(line(1, 2, 0.015, 0.13, 0.02));
  g.branches.push_back(line(1, 3, 0.01, 0.09, 0.02));
  g.branches.push_back(line(1, 5, 0.012, 0.1, 0.02));
  g.branches.push_back(line(2, 5, 0.01, 0.08, 0.02));
  g.branches.push_back(line(3, 4, 0.02, 0.16, 0.02));
  Branch t = line(4, 5, 0.0, 0.15);
  t.kind = BranchKind::Transformer;
  t.tap = 0.98;
  g.branches.push_back(t);
  return g;
}

/// Random connected graph topology: spanning tree plus extra edges, susceptance in [lo, hi].
inline PowerGrid random_connected(std::mt19937_64& rng, int n, double lo = 0.5, double hi = 5.0) {
  PowerGrid g = make_buses(n);
  std::uniform_real_distribution<double> sus(lo, hi);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (int i = 1; i < n; ++i) {
    std::uniform_int_distribution<int> parent(0, i - 1);
    g.branches.push_back(line(parent(rng), i, 0.0, 1.0 / sus(rng)));
  }
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (coin(rng) < 0.25) g.branches.push_back(line(i, j, 0.0, 1.0 / sus(rng)));
  g.generators.push_back(gen(0, 2.0, 1.0, 1.0, 10.0));
  return g;
}

/// Unlabeled sample carrying the grid's own loads.
inline Sample nominal_sample(const PowerGrid& g) {
  Sample s;
  for (const Load& l : g.loads) s.load_values.emplace_back(l.pd, l.qd);
  s.label_theta.assign(g.buses.size(), 0.0);
  s.label_vm.assign(g.buses.size(), 1.0);
  s.label_pg.assign(g.generators.size(), 0.0);
  s.label_qg.assign(g.generators.size(), 0.0);
  return s;
}

inline HeteroGraph graph_of(const PowerGrid& g) {
  return to_hetero_graph(g, nominal_sample(g), positional_encoding(g));
}

}  // namespace fixtures
