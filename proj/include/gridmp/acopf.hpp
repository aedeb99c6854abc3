#pragma once

#include <complex>
#include <vector>

#include "gridmp/grid.hpp"
#include "gridmp/sample.hpp"

namespace gridmp {

using Complex = std::complex<double>;

/// theta/vm per bus; pg/qg per enabled generator in PowerGrid::enabled_generators() order.
struct OperatingPoint {
  std::vector<double> theta;
  std::vector<double> vm;
  std::vector<double> pg;
  std::vector<double> qg;
};

/// Complex flows per enabled branch, in PowerGrid::enabled_branches() order.
struct BranchFlow {
  std::vector<Complex> s_fwd;
  std::vector<Complex> s_rev;
};

/// Mean constraint violations over the full component sets (pu, or rad for angles).
struct ViolationReport {
  double angle_diff = 0.0;
  double flow_fwd = 0.0;
  double flow_rev = 0.0;
  double p_balance = 0.0;
  double q_balance = 0.0;
  double pg_bound = 0.0;
  double qg_bound = 0.0;
  double v_bound = 0.0;
};

/// Throws DimensionError if the point does not fit the grid.
void check_point(const PowerGrid& grid, const OperatingPoint& point);

/// Labels of `sample` restricted to the enabled generators of `grid`.
OperatingPoint label_point(const PowerGrid& grid, const Sample& sample);

/// Sum of a*pg^2 + b*pg + c over enabled generators.
double objective_cost(const PowerGrid& grid, const std::vector<double>& pg);

BranchFlow branch_flows(const PowerGrid& grid, const OperatingPoint& point);

/// Per bus: generation - load - shunt consumption - flows leaving the bus.
std::vector<Complex> power_balance_residual(const PowerGrid& grid, const OperatingPoint& point,
                                            const BranchFlow& flows);

ViolationReport violation_report(const PowerGrid& grid, const OperatingPoint& point);

/// 100 * |model - label| / label. Throws ZeroLabelCostError unless label_cost > 0.
double optimality_gap(double model_cost, double label_cost);

}  // namespace gridmp
