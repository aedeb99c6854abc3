#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "gridmp/acopf.hpp"
#include "gridmp/grid.hpp"

namespace gridmp {

enum class BusKind { Slack, PV, PQ };

/// Reference bus is slack; buses with an enabled generator are PV; the rest PQ.
std::vector<BusKind> classify_buses(const PowerGrid& grid);

struct PfSetpoints {
  std::vector<double> pg;  // per enabled generator; slack-bus entries are the baseline for redistribution
  std::vector<double> qg;  // per enabled generator; optional baseline for reactive allocation
  std::vector<double> vm;  // per bus; read at slack and PV buses
  std::optional<std::vector<double>> theta_start;  // warm start, per bus
  std::optional<std::vector<double>> vm_start;     // warm start, per bus (PQ entries used)
};

struct PfOptions {
  double tol = 1e-8;
  int max_iter = 20;
};

struct PfResult {
  OperatingPoint point;
  bool converged = false;
  int iterations = 0;
  double max_mismatch = 0.0;
};

/// Polar Newton-Raphson. Returns the best iterate with converged = false when the
/// tolerance is not met within max_iter. Throws SingularJacobianError.
///
/// After the solve the slack bus absorbs the active mismatch and every
/// generator bus its reactive requirement. At a bus with several generators the
/// difference from the setpoint baseline is shared in proportion to each
/// generator's (max - min) range. Reactive limits are not enforced.
PfResult newton_power_flow(const PowerGrid& grid, const PfSetpoints& setpoints, const PfOptions& options = {});

/// Repairs a prediction with a power flow: predicted PG fixed at non-slack
/// generators, predicted V held at generator buses, warm-started from the
/// prediction. The report describes the corrected point.
std::pair<PfResult, ViolationReport> pf_postprocess(const PowerGrid& grid, const OperatingPoint& prediction,
                                                    const PfOptions& options = {});

}  // namespace gridmp
