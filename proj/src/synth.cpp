#include "gridmp/synth.hpp"

#include <algorithm>
#include <random>

#include "gridmp/acopf.hpp"
#include "gridmp/errors.hpp"

namespace gridmp {

namespace {

std::mt19937_64 sample_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace

Sample synthesize_sample(const PowerGrid& base, std::uint64_t seed, double range, const Outage& outage,
                         const PfOptions& options) {
  if (range < 0.0 || range >= 1.0) throw ValidationError("synthesize_sample: load_scale_range must be in [0, 1)");
  PowerGrid grid = apply_outage(base, outage);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> factor(1.0 - range, 1.0 + range);
  Sample s;
  s.outage = outage;
  double demand = 0.0;
  for (Load& l : grid.loads) {
    const double fp = range > 0.0 ? factor(rng) : 1.0;
    const double fq = range > 0.0 ? factor(rng) : 1.0;
    l.pd *= fp;
    l.qd *= fq;
    demand += l.pd;
    s.load_values.emplace_back(l.pd, l.qd);
  }

  const std::vector<int> gens = grid.enabled_generators();
  double capacity = 0.0;
  for (int gi : gens) capacity += grid.generators[gi].pg_max;
  PfSetpoints sp;
  for (int gi : gens) {
    const Generator& g = grid.generators[gi];
    const double share = capacity > 0.0 ? demand * kLossMargin * g.pg_max / capacity : 0.0;
    sp.pg.push_back(std::clamp(share, g.pg_min, g.pg_max));
  }
  sp.vm.resize(grid.buses.size());
  for (std::size_t i = 0; i < grid.buses.size(); ++i)
    sp.vm[i] = 0.5 * (grid.buses[i].v_min + grid.buses[i].v_max);

  const PfResult pf = newton_power_flow(grid, sp, options);
  if (!pf.converged)
    throw NotConvergedError("synthesize_sample: power flow did not converge (mismatch " +
                            std::to_string(pf.max_mismatch) + ")");

  s.label_theta = pf.point.theta;
  s.label_vm = pf.point.vm;
  s.label_pg.assign(base.generators.size(), 0.0);
  s.label_qg.assign(base.generators.size(), 0.0);
  for (std::size_t k = 0; k < gens.size(); ++k) {
    s.label_pg[gens[k]] = pf.point.pg[k];
    s.label_qg[gens[k]] = pf.point.qg[k];
  }
  s.label_cost = objective_cost(grid, pf.point.pg);
  return s;
}

std::vector<Outage> admissible_outages(const PowerGrid& base) {
  std::vector<Outage> out;
  auto try_add = [&](const Outage& o) {
    try {
      (void)apply_outage(base, o);
      out.push_back(o);
    } catch (const DisconnectedError&) {
    } catch (const LastGeneratorError&) {
    } catch (const AlreadyDisabledError&) {
    }
  };
  for (int i = 0; i < static_cast<int>(base.branches.size()); ++i) try_add(Outage::branch(i));
  for (int i = 0; i < static_cast<int>(base.generators.size()); ++i) try_add(Outage::generator(i));
  return out;
}

SynthReport synthesize_dataset(const PowerGrid& base, std::size_t n, std::uint64_t seed, double range, bool n1) {
  SynthReport report;
  const std::vector<Outage> outages = n1 ? admissible_outages(base) : std::vector<Outage>{};
  if (n1 && outages.empty()) throw ValidationError("synthesize_dataset: grid has no admissible single outage");
  for (std::size_t i = 0; i < n; ++i) {
    std::mt19937_64 rng = sample_rng(seed, i);
    Outage outage;
    if (n1) outage = outages[std::uniform_int_distribution<std::size_t>(0, outages.size() - 1)(rng)];
    try {
      report.samples.push_back(synthesize_sample(base, rng(), range, outage));
    } catch (const NotConvergedError&) {
      ++report.discarded;
    } catch (const SingularJacobianError&) {
      ++report.discarded;
    }
  }
  return report;
}

}  // namespace gridmp
