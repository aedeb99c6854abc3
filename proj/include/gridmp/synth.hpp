#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "gridmp/grid.hpp"
#include "gridmp/power_flow.hpp"
#include "gridmp/sample.hpp"

namespace gridmp {

/// Multiplier applied to total scaled demand when dispatching generators.
inline constexpr double kLossMargin = 1.02;

/// Generates a labeled sample for `base` (with `outage` applied when given):
/// loads scaled by independent uniform factors in [1 - range, 1 + range],
/// proportional dispatch clipped to generator bounds, PV voltages at the
/// midpoint of their bounds, labels from a converged Newton power flow.
/// Throws NotConvergedError when the flow does not converge.
Sample synthesize_sample(const PowerGrid& base, std::uint64_t seed, double load_scale_range,
                         const Outage& outage = Outage::none(), const PfOptions& options = {});

/// Outages of `base` that keep the grid connected and leave a generator at the
/// reference bus.
std::vector<Outage> admissible_outages(const PowerGrid& base);

struct SynthReport {
  std::vector<Sample> samples;
  std::size_t discarded = 0;
};

/// n attempts with per-sample seeds derived from `seed`. With `n1` each sample
/// draws one admissible outage uniformly. Non-converged samples are discarded.
SynthReport synthesize_dataset(const PowerGrid& base, std::size_t n, std::uint64_t seed, double load_scale_range,
                               bool n1 = false);

}  // namespace gridmp
