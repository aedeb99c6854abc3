#include "gridmp/power_flow.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "gridmp/errors.hpp"

namespace gridmp {

namespace {

using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

CMatrix admittance_matrix(const PowerGrid& grid) {
  const int n = grid.num_buses();
  CMatrix y = CMatrix::Zero(n, n);
  for (const Branch& br : grid.branches) {
    if (!br.enabled) continue;
    const Complex ys = br.series_admittance();
    const Complex yc(0.0, br.b_charge / 2.0);
    const Complex t = std::polar(br.tap, br.shift);
    const int f = br.from_bus, k = br.to_bus;
    y(f, f) += (ys + yc) / std::norm(t);
    y(f, k) += -ys / std::conj(t);
    y(k, f) += -ys / t;
    y(k, k) += ys + yc;
  }
  for (const Shunt& s : grid.shunts) y(s.bus, s.bus) += Complex(s.gs, s.bs);
  return y;
}

// Shares `needed - sum(baseline)` among generators in proportion to their ranges.
void allocate(const std::vector<int>& members, double needed, const std::vector<double>& baseline,
              const std::vector<double>& range, std::vector<double>& out) {
  double base_sum = 0.0, range_sum = 0.0;
  for (int k : members) {
    base_sum += baseline[k];
    range_sum += std::max(0.0, range[k]);
  }
  const double delta = needed - base_sum;
  for (int k : members) {
    const double w = range_sum > 0.0 ? std::max(0.0, range[k]) / range_sum : 1.0 / static_cast<double>(members.size());
    out[k] = baseline[k] + delta * w;
  }
}

}  // namespace

std::vector<BusKind> classify_buses(const PowerGrid& grid) {
  std::vector<BusKind> kind(grid.buses.size(), BusKind::PQ);
  for (const Generator& g : grid.generators)
    if (g.enabled) kind[g.bus] = BusKind::PV;
  kind[grid.reference_bus] = BusKind::Slack;
  return kind;
}

PfResult newton_power_flow(const PowerGrid& grid, const PfSetpoints& sp, const PfOptions& opt) {
  const int n = grid.num_buses();
  const std::vector<int> gens = grid.enabled_generators();
  if (sp.pg.size() != gens.size()) throw DimensionError("newton_power_flow: pg setpoints per enabled generator");
  if (!sp.qg.empty() && sp.qg.size() != gens.size())
    throw DimensionError("newton_power_flow: qg baseline per enabled generator");
  if (sp.vm.size() != static_cast<std::size_t>(n)) throw DimensionError("newton_power_flow: vm setpoints per bus");

  const std::vector<BusKind> kind = classify_buses(grid);
  const CMatrix ybus = admittance_matrix(grid);

  Eigen::VectorXd p_sched = Eigen::VectorXd::Zero(n), q_sched = Eigen::VectorXd::Zero(n);
  for (std::size_t k = 0; k < gens.size(); ++k) p_sched[grid.generators[gens[k]].bus] += sp.pg[k];
  for (const Load& l : grid.loads) {
    p_sched[l.bus] -= l.pd;
    q_sched[l.bus] -= l.qd;
  }

  std::vector<int> pvpq, pq;
  for (int i = 0; i < n; ++i) {
    if (kind[i] != BusKind::Slack) pvpq.push_back(i);
    if (kind[i] == BusKind::PQ) pq.push_back(i);
  }
  const int npvpq = static_cast<int>(pvpq.size()), npq = static_cast<int>(pq.size());

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(n), vm(n);
  for (int i = 0; i < n; ++i) {
    vm[i] = kind[i] == BusKind::PQ ? 1.0 : sp.vm[i];
    if (sp.theta_start) theta[i] = (*sp.theta_start).at(i);
    if (sp.vm_start && kind[i] == BusKind::PQ) vm[i] = (*sp.vm_start).at(i);
  }
  theta[grid.reference_bus] = 0.0;

  auto voltage = [&]() {
    CVector v(n);
    for (int i = 0; i < n; ++i) v[i] = std::polar(vm[i], theta[i]);
    return v;
  };
  auto mismatch = [&](const CVector& v) {
    const CVector s = v.cwiseProduct((ybus * v).conjugate());
    Eigen::VectorXd f(npvpq + npq);
    for (int a = 0; a < npvpq; ++a) f[a] = s[pvpq[a]].real() - p_sched[pvpq[a]];
    for (int a = 0; a < npq; ++a) f[npvpq + a] = s[pq[a]].imag() - q_sched[pq[a]];
    return f;
  };

  PfResult result;
  Eigen::VectorXd best_theta = theta, best_vm = vm;
  double best = std::numeric_limits<double>::infinity();
  int iter = 0;
  for (;; ++iter) {
    const CVector v = voltage();
    const Eigen::VectorXd f = mismatch(v);
    const double norm = f.size() ? f.cwiseAbs().maxCoeff() : 0.0;
    if (!std::isfinite(norm)) break;
    if (norm < best) {
      best = norm;
      best_theta = theta;
      best_vm = vm;
    }
    if (norm < opt.tol) {
      result.converged = true;
      break;
    }
    if (iter >= opt.max_iter) break;

    // dS/dtheta = j diag(V) conj(diag(I) - Y diag(V)); dS/d|V| = diag(V) conj(Y diag(V/|V|)) + conj(diag(I)) diag(V/|V|)
    const CVector ibus = ybus * v;
    CVector vnorm(n);
    for (int i = 0; i < n; ++i) vnorm[i] = v[i] / vm[i];
    CMatrix ds_dth = CMatrix(ybus * v.asDiagonal()).conjugate();
    ds_dth = -ds_dth;
    ds_dth.diagonal() += ibus.conjugate();
    ds_dth = (Complex(0.0, 1.0) * v).asDiagonal() * ds_dth;
    CMatrix ds_dvm = v.asDiagonal() * CMatrix(ybus * vnorm.asDiagonal()).conjugate();
    ds_dvm.diagonal() += ibus.conjugate().cwiseProduct(vnorm);

    Eigen::MatrixXd jac(npvpq + npq, npvpq + npq);
    for (int a = 0; a < npvpq; ++a) {
      for (int b = 0; b < npvpq; ++b) jac(a, b) = ds_dth(pvpq[a], pvpq[b]).real();
      for (int b = 0; b < npq; ++b) jac(a, npvpq + b) = ds_dvm(pvpq[a], pq[b]).real();
    }
    for (int a = 0; a < npq; ++a) {
      for (int b = 0; b < npvpq; ++b) jac(npvpq + a, b) = ds_dth(pq[a], pvpq[b]).imag();
      for (int b = 0; b < npq; ++b) jac(npvpq + a, npvpq + b) = ds_dvm(pq[a], pq[b]).imag();
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
    if (!(lu.rcond() > 1e-14))
      throw SingularJacobianError("newton_power_flow: singular Jacobian at iteration " + std::to_string(iter));
    const Eigen::VectorXd dx = lu.solve(-f);
    for (int a = 0; a < npvpq; ++a) theta[pvpq[a]] += dx[a];
    for (int a = 0; a < npq; ++a) vm[pq[a]] += dx[npvpq + a];
  }

  if (!result.converged) {
    theta = best_theta;
    vm = best_vm;
  }
  result.iterations = iter;
  result.max_mismatch = best;

  const CVector v = voltage();
  const CVector s = v.cwiseProduct((ybus * v).conjugate());
  OperatingPoint& pt = result.point;
  pt.theta.assign(theta.data(), theta.data() + n);
  pt.vm.assign(vm.data(), vm.data() + n);
  pt.pg = sp.pg;
  pt.qg.assign(gens.size(), 0.0);

  std::vector<double> p_need(n, 0.0), q_need(n, 0.0);
  for (int i = 0; i < n; ++i) {
    p_need[i] = s[i].real();
    q_need[i] = s[i].imag();
  }
  for (const Load& l : grid.loads) {
    p_need[l.bus] += l.pd;
    q_need[l.bus] += l.qd;
  }
  std::vector<std::vector<int>> at_bus(n);
  std::vector<double> p_range(gens.size()), q_range(gens.size());
  for (std::size_t k = 0; k < gens.size(); ++k) {
    const Generator& g = grid.generators[gens[k]];
    at_bus[g.bus].push_back(static_cast<int>(k));
    p_range[k] = g.pg_max - g.pg_min;
    q_range[k] = g.qg_max - g.qg_min;
  }
  const std::vector<double> q_base = sp.qg.empty() ? std::vector<double>(gens.size(), 0.0) : sp.qg;
  for (int i = 0; i < n; ++i) {
    if (at_bus[i].empty()) continue;
    if (kind[i] == BusKind::Slack) allocate(at_bus[i], p_need[i], sp.pg, p_range, pt.pg);
    allocate(at_bus[i], q_need[i], q_base, q_range, pt.qg);
  }
  return result;
}

std::pair<PfResult, ViolationReport> pf_postprocess(const PowerGrid& grid, const OperatingPoint& prediction,
                                                    const PfOptions& options) {
  check_point(grid, prediction);
  PfSetpoints sp;
  sp.pg = prediction.pg;
  sp.qg = prediction.qg;
  sp.vm = prediction.vm;
  sp.theta_start = prediction.theta;
  sp.vm_start = prediction.vm;
  PfResult pf = newton_power_flow(grid, sp, options);
  ViolationReport report = violation_report(grid, pf.point);
  return {std::move(pf), report};
}

}  // namespace gridmp
