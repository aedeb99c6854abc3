#include "gridmp/acopf.hpp"

#include <cmath>
#include <string>

#include "gridmp/errors.hpp"

namespace gridmp {

namespace {

double outside(double value, double lo, double hi) {
  return std::max(0.0, value - hi) + std::max(0.0, lo - value);
}

double mean(double sum, std::size_t n) { return n == 0 ? 0.0 : sum / static_cast<double>(n); }

}  // namespace

void check_point(const PowerGrid& grid, const OperatingPoint& p) {
  const std::size_t n = grid.buses.size();
  const std::size_t g = grid.enabled_generators().size();
  if (p.theta.size() != n || p.vm.size() != n)
    throw DimensionError("operating point: expected " + std::to_string(n) + " bus entries");
  if (p.pg.size() != g || p.qg.size() != g)
    throw DimensionError("operating point: expected " + std::to_string(g) + " generator entries");
}

OperatingPoint label_point(const PowerGrid& grid, const Sample& s) {
  if (s.label_theta.size() != grid.buses.size() || s.label_vm.size() != grid.buses.size() ||
      s.label_pg.size() != grid.generators.size() || s.label_qg.size() != grid.generators.size())
    throw DimensionError("label_point: sample labels do not match grid");
  OperatingPoint p{s.label_theta, s.label_vm, {}, {}};
  for (int gi : grid.enabled_generators()) {
    p.pg.push_back(s.label_pg[gi]);
    p.qg.push_back(s.label_qg[gi]);
  }
  return p;
}

double objective_cost(const PowerGrid& grid, const std::vector<double>& pg) {
  const std::vector<int> gens = grid.enabled_generators();
  if (pg.size() != gens.size())
    throw DimensionError("objective_cost: expected " + std::to_string(gens.size()) + " generator values");
  double cost = 0.0;
  for (std::size_t k = 0; k < gens.size(); ++k) {
    const Generator& g = grid.generators[gens[k]];
    cost += g.cost_a * pg[k] * pg[k] + g.cost_b * pg[k] + g.cost_c;
  }
  return cost;
}

BranchFlow branch_flows(const PowerGrid& grid, const OperatingPoint& p) {
  BranchFlow out;
  for (int bi : grid.enabled_branches()) {
    const Branch& br = grid.branches[bi];
    const Complex y = br.series_admittance();
    const Complex yc(0.0, br.b_charge / 2.0);
    const Complex t = std::polar(br.tap, br.shift);
    const Complex vi = std::polar(p.vm[br.from_bus], p.theta[br.from_bus]);
    const Complex vj = std::polar(p.vm[br.to_bus], p.theta[br.to_bus]);
    const Complex ytot = std::conj(y + yc);
    out.s_fwd.push_back(ytot * std::norm(vi) / std::norm(t) - std::conj(y) * vi * std::conj(vj) / t);
    out.s_rev.push_back(ytot * std::norm(vj) - std::conj(y) * std::conj(vi) * vj / std::conj(t));
  }
  return out;
}

std::vector<Complex> power_balance_residual(const PowerGrid& grid, const OperatingPoint& p,
                                            const BranchFlow& flows) {
  std::vector<Complex> res(grid.buses.size(), Complex{});
  const std::vector<int> gens = grid.enabled_generators();
  for (std::size_t k = 0; k < gens.size(); ++k)
    res[grid.generators[gens[k]].bus] += Complex(p.pg[k], p.qg[k]);
  for (const Load& l : grid.loads) res[l.bus] -= Complex(l.pd, l.qd);
  for (const Shunt& s : grid.shunts) res[s.bus] -= Complex(s.gs, -s.bs) * p.vm[s.bus] * p.vm[s.bus];
  const std::vector<int> branches = grid.enabled_branches();
  for (std::size_t k = 0; k < branches.size(); ++k) {
    const Branch& br = grid.branches[branches[k]];
    res[br.from_bus] -= flows.s_fwd[k];
    res[br.to_bus] -= flows.s_rev[k];
  }
  return res;
}

ViolationReport violation_report(const PowerGrid& grid, const OperatingPoint& p) {
  check_point(grid, p);
  ViolationReport r;
  const BranchFlow flows = branch_flows(grid, p);
  const std::vector<int> branches = grid.enabled_branches();
  double angle = 0.0, fwd = 0.0, rev = 0.0;
  for (std::size_t k = 0; k < branches.size(); ++k) {
    const Branch& br = grid.branches[branches[k]];
    angle += outside(p.theta[br.from_bus] - p.theta[br.to_bus], br.ang_min, br.ang_max);
    fwd += std::max(0.0, std::abs(flows.s_fwd[k]) - br.s_max);
    rev += std::max(0.0, std::abs(flows.s_rev[k]) - br.s_max);
  }
  r.angle_diff = mean(angle, branches.size());
  r.flow_fwd = mean(fwd, branches.size());
  r.flow_rev = mean(rev, branches.size());

  const std::vector<Complex> res = power_balance_residual(grid, p, flows);
  double pb = 0.0, qb = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < res.size(); ++i) {
    pb += std::abs(res[i].real());
    qb += std::abs(res[i].imag());
    vb += outside(p.vm[i], grid.buses[i].v_min, grid.buses[i].v_max);
  }
  r.p_balance = mean(pb, res.size());
  r.q_balance = mean(qb, res.size());
  r.v_bound = mean(vb, res.size());

  const std::vector<int> gens = grid.enabled_generators();
  double pgv = 0.0, qgv = 0.0;
  for (std::size_t k = 0; k < gens.size(); ++k) {
    const Generator& g = grid.generators[gens[k]];
    pgv += outside(p.pg[k], g.pg_min, g.pg_max);
    qgv += outside(p.qg[k], g.qg_min, g.qg_max);
  }
  r.pg_bound = mean(pgv, gens.size());
  r.qg_bound = mean(qgv, gens.size());
  return r;
}

double optimality_gap(double model_cost, double label_cost) {
  if (!(label_cost > 0.0)) throw ZeroLabelCostError("optimality_gap: label cost must be positive");
  return 100.0 * std::abs(model_cost - label_cost) / label_cost;
}

}  // namespace gridmp
