#include <doctest.h>

#include <cmath>
#include <complex>
#include <random>

#include "fixtures.hpp"
#include "gridmp/acopf.hpp"
#include "gridmp/errors.hpp"
#include "gridmp/power_flow.hpp"
#include "gridmp/synth.hpp"

using namespace gridmp;

namespace {

// Flows from terminal currents of the pi model, I = Y V, S = V conj(I).
std::pair<Complex, Complex> current_oracle(const Branch& br, Complex vf, Complex vt) {
  const Complex y = 1.0 / Complex(br.r, br.x);
  const Complex t = std::polar(br.tap, br.shift);
  const Complex half(0.0, br.b_charge / 2.0);
  const Complex yff = (y + half) / std::norm(t);
  const Complex yft = -y / std::conj(t);
  const Complex ytf = -y / t;
  const Complex ytt = y + half;
  return {vf * std::conj(yff * vf + yft * vt), vt * std::conj(ytf * vf + ytt * vt)};
}

double max_abs_balance(const PowerGrid& g, const OperatingPoint& p) {
  double worst = 0.0;
  for (const Complex& r : power_balance_residual(g, p, branch_flows(g, p)))
    worst = std::max({worst, std::abs(r.real()), std::abs(r.imag())});
  return worst;
}

// Receiving-end voltage of a lossless line with V0 = 1: the high root of
// sqrt(V1^2 - (pd x)^2) - V1^2 - qd x = 0, by bisection.
double two_bus_v1(double pd, double qd, double x) {
  auto f = [&](double v) { return std::sqrt(v * v - pd * pd * x * x) - v * v - qd * x; };
  double lo = 0.7, hi = 1.0;
  REQUIRE(f(lo) > 0.0);
  REQUIRE(f(hi) < 0.0);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

PfSetpoints flat_setpoints(const PowerGrid& g) {
  PfSetpoints sp;
  sp.pg.assign(g.enabled_generators().size(), 0.0);
  sp.vm.assign(g.buses.size(), 1.0);
  return sp;
}

}  // namespace

TEST_CASE("objective cost sums quadratic terms") {
  PowerGrid g = fixtures::make_buses(1);
  g.generators.push_back(fixtures::gen(0, 2.0, 1.0, 2.0, 3.0, 1.0));
  CHECK(objective_cost(g, {2.0}) == doctest::Approx(15.0));
  CHECK(objective_cost(g, {0.0}) == doctest::Approx(1.0));

  const PowerGrid six = fixtures::six_bus();
  double c_sum = 0.0;
  for (const Generator& gen : six.generators) c_sum += gen.cost_c;
  CHECK(objective_cost(six, std::vector<double>(4, 0.0)) == doctest::Approx(c_sum));
}

TEST_CASE("cost is monotone in dispatch for non-negative coefficients") {
  const PowerGrid g = fixtures::six_bus();
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> pg(4);
    for (double& v : pg) v = u(rng);
    std::vector<double> more = pg;
    more[static_cast<std::size_t>(trial % 4)] += 0.1;
    CHECK(objective_cost(g, more) > objective_cost(g, pg));
  }
}

TEST_CASE("equal voltages carry no flow on a lossless line") {
  const PowerGrid g = fixtures::two_bus();
  const BranchFlow f = branch_flows(g, OperatingPoint{{0.0, 0.0}, {1.0, 1.0}, {0.0}, {0.0}});
  CHECK(std::abs(f.s_fwd[0]) < 1e-15);
  CHECK(std::abs(f.s_rev[0]) < 1e-15);
}

TEST_CASE("lossless line flows match the sine and cosine forms") {
  const PowerGrid g = fixtures::two_bus(0.5, 0.1, 0.0, 0.5);
  const OperatingPoint p{{0.1, 0.0}, {1.02, 0.98}, {0.0}, {0.0}};
  const BranchFlow f = branch_flows(g, p);
  const double pij = 1.02 * 0.98 * std::sin(0.1) / 0.5;
  const double qij = (1.02 * 1.02 - 1.02 * 0.98 * std::cos(0.1)) / 0.5;
  const double qji = (0.98 * 0.98 - 1.02 * 0.98 * std::cos(0.1)) / 0.5;
  CHECK(f.s_fwd[0].real() == doctest::Approx(pij).epsilon(1e-13));
  CHECK(f.s_fwd[0].imag() == doctest::Approx(qij).epsilon(1e-13));
  CHECK(f.s_rev[0].real() == doctest::Approx(-pij).epsilon(1e-13));
  CHECK(f.s_rev[0].imag() == doctest::Approx(qji).epsilon(1e-13));
}

TEST_CASE("branch flows match the terminal-current oracle") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> ang(-0.2, 0.2), mag(0.94, 1.06);
  for (const PowerGrid& g : {fixtures::three_bus(), fixtures::four_bus(), fixtures::six_bus()}) {
    for (int trial = 0; trial < 10; ++trial) {
      OperatingPoint p;
      for (int i = 0; i < g.num_buses(); ++i) {
        p.theta.push_back(ang(rng));
        p.vm.push_back(mag(rng));
      }
      p.pg.assign(g.generators.size(), 0.0);
      p.qg.assign(g.generators.size(), 0.0);
      const BranchFlow f = branch_flows(g, p);
      for (std::size_t k = 0; k < g.branches.size(); ++k) {
        const Branch& br = g.branches[k];
        const auto [sf, st] = current_oracle(br, std::polar(p.vm[br.from_bus], p.theta[br.from_bus]),
                                             std::polar(p.vm[br.to_bus], p.theta[br.to_bus]));
        CHECK(std::abs(f.s_fwd[k] - sf) < 1e-12);
        CHECK(std::abs(f.s_rev[k] - st) < 1e-12);
      }
    }
  }
}

TEST_CASE("disabled branches are skipped") {
  PowerGrid g = fixtures::six_bus();
  g.branches[2].enabled = false;
  OperatingPoint p{std::vector<double>(6, 0.0), std::vector<double>(6, 1.0), std::vector<double>(4, 0.0),
                   std::vector<double>(4, 0.0)};
  CHECK(branch_flows(g, p).s_fwd.size() == 8);
}

TEST_CASE("power balance residual of a hand point") {
  // Two buses at equal voltage, no flow: residual is generation minus load.
  const PowerGrid g = fixtures::two_bus(0.5, 0.1);
  const OperatingPoint p{{0.0, 0.0}, {1.0, 1.0}, {0.3}, {0.2}};
  const auto res = power_balance_residual(g, p, branch_flows(g, p));
  CHECK(res[0].real() == doctest::Approx(0.3));
  CHECK(res[0].imag() == doctest::Approx(0.2));
  CHECK(res[1].real() == doctest::Approx(-0.5));
  CHECK(res[1].imag() == doctest::Approx(-0.1));
}

TEST_CASE("shunt consumption enters the balance") {
  PowerGrid g = fixtures::two_bus(0.0, 0.0);
  g.shunts.push_back(Shunt{1, 0.1, 0.2});
  const OperatingPoint p{{0.0, 0.0}, {1.0, 1.1}, {0.0}, {0.0}};
  // Remove the branch contribution by comparing against the same point without the shunt.
  PowerGrid bare = g;
  bare.shunts.clear();
  const auto with = power_balance_residual(g, p, branch_flows(g, p));
  const auto without = power_balance_residual(bare, p, branch_flows(bare, p));
  CHECK((without[1] - with[1]).real() == doctest::Approx(0.1 * 1.21));
  CHECK((without[1] - with[1]).imag() == doctest::Approx(-0.2 * 1.21));
}

TEST_CASE("violation report averages bound excess") {
  PowerGrid g = fixtures::two_bus();
  OperatingPoint p{{0.0, 0.0}, {1.0, 1.0}, {3.1}, {0.0}};
  ViolationReport r = violation_report(g, p);
  CHECK(r.pg_bound == doctest::Approx(0.1));
  CHECK(r.qg_bound == 0.0);
  CHECK(r.v_bound == 0.0);

  p.vm = {1.10, 0.90};
  r = violation_report(g, p);
  CHECK(r.v_bound == doctest::Approx((0.04 + 0.04) / 2.0));

  g.generators.push_back(fixtures::gen(1, 1.0, 1.0, 1.0, 1.0));
  p = OperatingPoint{{0.0, 0.0}, {1.0, 1.0}, {3.1, 0.0}, {0.0, 0.0}};
  CHECK(violation_report(g, p).pg_bound == doctest::Approx(0.05));
}

TEST_CASE("angle difference at the limit is not a violation") {
  const PowerGrid g = fixtures::two_bus();
  const double lim = g.branches[0].ang_max;
  CHECK(violation_report(g, OperatingPoint{{lim, 0.0}, {1.0, 1.0}, {0.0}, {0.0}}).angle_diff == 0.0);
  CHECK(violation_report(g, OperatingPoint{{lim + 0.1, 0.0}, {1.0, 1.0}, {0.0}, {0.0}}).angle_diff ==
        doctest::Approx(0.1));
}

TEST_CASE("point dimensions are checked") {
  const PowerGrid g = fixtures::two_bus();
  CHECK_THROWS_AS(violation_report(g, OperatingPoint{{0.0}, {1.0, 1.0}, {0.0}, {0.0}}), DimensionError);
  CHECK_THROWS_AS(violation_report(g, OperatingPoint{{0.0, 0.0}, {1.0, 1.0}, {0.0, 0.0}, {0.0}}), DimensionError);
}

TEST_CASE("optimality gap") {
  CHECK(optimality_gap(101.0, 100.0) == doctest::Approx(1.0));
  CHECK(optimality_gap(100.0, 100.0) == 0.0);
  CHECK(optimality_gap(99.0, 100.0) == doctest::Approx(1.0));
  CHECK_THROWS_AS(optimality_gap(1.0, 0.0), ZeroLabelCostError);
  CHECK_THROWS_AS(optimality_gap(1.0, -2.0), ZeroLabelCostError);
}

TEST_CASE("bus classification") {
  const auto kinds = classify_buses(fixtures::six_bus());
  CHECK(kinds[0] == BusKind::Slack);
  CHECK(kinds[1] == BusKind::PV);
  CHECK(kinds[2] == BusKind::PV);
  CHECK(kinds[3] == BusKind::PQ);
}

TEST_CASE("zero load converges at the flat start") {
  const PowerGrid g = fixtures::two_bus(0.0, 0.0);
  const PfResult r = newton_power_flow(g, flat_setpoints(g));
  CHECK(r.converged);
  CHECK(r.iterations == 0);
  CHECK(std::abs(r.point.theta[1]) < 1e-12);
  CHECK(std::abs(r.point.vm[1] - 1.0) < 1e-12);
}

TEST_CASE("two-bus power flow matches the closed form") {
  const double pd = 0.5, qd = 0.1, x = 0.1;
  const PowerGrid g = fixtures::two_bus(pd, qd, 0.0, x);
  const PfResult r = newton_power_flow(g, flat_setpoints(g));
  REQUIRE(r.converged);
  const double v1 = two_bus_v1(pd, qd, x);
  const double th1 = -std::asin(pd * x / v1);
  CHECK(std::abs(r.point.vm[0] - 1.0) < 1e-12);
  CHECK(std::abs(r.point.theta[0]) < 1e-12);
  CHECK(std::abs(r.point.vm[1] - v1) < 1e-8);
  CHECK(std::abs(r.point.theta[1] - th1) < 1e-8);
  CHECK(std::abs(r.point.pg[0] - pd) < 1e-8);
  CHECK(std::abs(r.point.qg[0] - (1.0 - v1 * v1 - qd * x) / x) < 1e-8);
}

TEST_CASE("beyond the nose point the flow does not converge") {
  const double pd = 6.0, qd = 0.0, x = 0.1;
  double best = -1e9;
  for (double v = 0.61; v <= 1.0; v += 1e-4) best = std::max(best, std::sqrt(v * v - pd * pd * x * x) - v * v - qd * x);
  REQUIRE(best < 0.0);  // no real solution exists

  const PowerGrid g = fixtures::two_bus(pd, qd, 0.0, x);
  bool failed = false;
  try {
    failed = !newton_power_flow(g, flat_setpoints(g)).converged;
  } catch (const SingularJacobianError&) {
    failed = true;
  }
  CHECK(failed);
  CHECK_THROWS_AS(synthesize_sample(g, 1, 0.0), NotConvergedError);
}

TEST_CASE("restarting from a solution needs no further iterations") {
  const PowerGrid g = fixtures::six_bus();
  const Sample s = synthesize_sample(g, 3, 0.1);
  const PowerGrid gs = grid_for_sample(g, s);
  const OperatingPoint lp = label_point(gs, s);
  PfSetpoints sp;
  sp.pg = lp.pg;
  sp.qg = lp.qg;
  sp.vm = lp.vm;
  sp.theta_start = lp.theta;
  sp.vm_start = lp.vm;
  const PfResult r = newton_power_flow(gs, sp);
  CHECK(r.converged);
  CHECK(r.iterations <= 1);
}

TEST_CASE("converged flows conserve power") {
  for (const PowerGrid& g : {fixtures::three_bus(), fixtures::four_bus(), fixtures::six_bus()}) {
    PfSetpoints sp = flat_setpoints(g);
    for (std::size_t k = 0; k < sp.pg.size(); ++k) sp.pg[k] = 0.4;
    const PfResult r = newton_power_flow(g, sp);
    REQUIRE(r.converged);
    CHECK(max_abs_balance(g, r.point) < 1e-8);
    double gen = 0.0, load = 0.0;
    for (double v : r.point.pg) gen += v;
    for (const Load& l : g.loads) load += l.pd;
    CHECK(gen >= load);  // resistive losses are non-negative
  }
}

TEST_CASE("pf postprocess leaves a solved point unchanged") {
  const PowerGrid base = fixtures::six_bus();
  const Sample s = synthesize_sample(base, 11, 0.2);
  const PowerGrid g = grid_for_sample(base, s);
  const OperatingPoint lp = label_point(g, s);
  const auto [res, report] = pf_postprocess(g, lp);
  CHECK(res.converged);
  for (int i = 0; i < g.num_buses(); ++i) {
    CHECK(std::abs(res.point.theta[i] - lp.theta[i]) < 1e-8);
    CHECK(std::abs(res.point.vm[i] - lp.vm[i]) < 1e-8);
  }
  CHECK(report.p_balance < 1e-8);
}

TEST_CASE("pf postprocess repairs a perturbed prediction") {
  const PowerGrid base = fixtures::six_bus();
  const Sample s = synthesize_sample(base, 12, 0.2);
  const PowerGrid g = grid_for_sample(base, s);
  OperatingPoint pred = label_point(g, s);
  for (int i = 1; i < g.num_buses(); ++i) pred.theta[i] += 0.05;
  pred.qg[2] += 0.3;
  CHECK(violation_report(g, pred).p_balance > 1e-3);
  const auto [res, report] = pf_postprocess(g, pred);
  REQUIRE(res.converged);
  CHECK(report.p_balance < 1e-8);
  CHECK(report.q_balance < 1e-8);
  // Non-slack dispatch is held.
  CHECK(res.point.pg[2] == doctest::Approx(pred.pg[2]).epsilon(1e-12));
  CHECK(res.point.pg[3] == doctest::Approx(pred.pg[3]).epsilon(1e-12));
}

TEST_CASE("slack absorbing a shortfall shows as a bound violation") {
  const PowerGrid base = fixtures::six_bus();
  const Sample s = synthesize_sample(base, 13, 0.0);
  const PowerGrid g = grid_for_sample(base, s);
  OperatingPoint pred = label_point(g, s);
  pred.pg[2] = 0.0;
  pred.pg[3] = 0.0;
  const auto [res, report] = pf_postprocess(g, pred);
  REQUIRE(res.converged);
  CHECK(report.p_balance < 1e-8);
  CHECK(report.pg_bound > 0.0);
}

TEST_CASE("synthetic sample with zero range uses nominal loads") {
  const PowerGrid g = fixtures::six_bus();
  const Sample s = synthesize_sample(g, 5, 0.0);
  REQUIRE(s.load_values.size() == g.loads.size());
  for (std::size_t k = 0; k < g.loads.size(); ++k) {
    CHECK(s.load_values[k].first == g.loads[k].pd);
    CHECK(s.load_values[k].second == g.loads[k].qd);
  }
  const Sample t = synthesize_sample(g, 99, 0.0);
  CHECK(sample_to_line(s) == sample_to_line(t));
}

TEST_CASE("synthetic samples are seed-deterministic and balanced") {
  const PowerGrid g = fixtures::six_bus();
  CHECK(sample_to_line(synthesize_sample(g, 7, 0.2)) == sample_to_line(synthesize_sample(g, 7, 0.2)));
  CHECK(sample_to_line(synthesize_sample(g, 7, 0.2)) != sample_to_line(synthesize_sample(g, 8, 0.2)));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Sample s = synthesize_sample(g, seed, 0.2);
    for (std::size_t k = 0; k < g.loads.size(); ++k) {
      CHECK(s.load_values[k].first >= 0.8 * g.loads[k].pd - 1e-15);
      CHECK(s.load_values[k].first <= 1.2 * g.loads[k].pd + 1e-15);
    }
    const PowerGrid gs = grid_for_sample(g, s);
    const OperatingPoint lp = label_point(gs, s);
    CHECK(max_abs_balance(gs, lp) < 1e-8);
    CHECK(s.label_cost == doctest::Approx(objective_cost(gs, lp.pg)).epsilon(1e-12));
    CHECK(s.label_cost > 0.0);
  }
}

TEST_CASE("outage samples zero the disabled generator") {
  const PowerGrid g = fixtures::six_bus();
  const Sample s = synthesize_sample(g, 2, 0.1, Outage::generator(3));
  CHECK(s.outage == Outage::generator(3));
  CHECK(s.label_pg[3] == 0.0);
  CHECK(s.label_qg[3] == 0.0);
  check_sample(g, s);
}

TEST_CASE("admissible outages") {
  CHECK(admissible_outages(fixtures::two_bus()).empty());
  const auto four = admissible_outages(fixtures::four_bus());
  CHECK(four.size() == 8);  // five branches, three generators
  for (const Outage& o : admissible_outages(fixtures::six_bus())) CHECK(is_connected(apply_outage(fixtures::six_bus(), o)));
}

TEST_CASE("dataset synthesis reports discards") {
  const SynthReport ok = synthesize_dataset(fixtures::six_bus(), 10, 1, 0.2, true);
  CHECK(ok.samples.size() + ok.discarded == 10);
  CHECK(ok.discarded == 0);
  for (const Sample& s : ok.samples) CHECK_FALSE(s.outage.is_none());

  const SynthReport bad = synthesize_dataset(fixtures::two_bus(6.0, 0.0, 0.0, 0.1), 3, 1, 0.0);
  CHECK(bad.samples.empty());
  CHECK(bad.discarded == 3);
}
