#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "voltreg/errors.hpp"
#include "voltreg/grid/network.hpp"

namespace voltreg::grid {

// Per-node demand and storage power. Storage follows the charging-positive
// convention, so the node's net load is (p_demand + p_ess).
struct NodeInjection {
  double p_demand_w = 0.0;
  double q_demand_var = 0.0;
  double p_ess_w = 0.0;
  double q_ess_var = 0.0;
};

// Reactive power of a device with power factor `pf` drawing `p_w`.
inline double reactive_from_pf(double p_w, double pf) {
  if (!(pf > 0.0 && pf <= 1.0)) throw Error("power factor must lie in (0, 1]");
  return p_w * std::tan(std::acos(pf));
}

inline NodeInjection ess_injection(double p_demand_w, double q_demand_var, double p_ess_w,
                                   double pf_ess = 1.0) {
  return {p_demand_w, q_demand_var, p_ess_w, reactive_from_pf(p_ess_w, pf_ess)};
}

// Power flow state. Flows are sending-end quantities of each oriented line;
// losses use the sending-end voltage, matching the voltage-drop relation
//   V_m^2 - V_n^2 = 2 (R P + X Q) - (P^2 + Q^2) / V_m^2 (R^2 + X^2).
// All electrical quantities are per unit.
struct PowerFlowSolution {
  std::vector<double> v;          // magnitude per node
  std::vector<double> angle_rad;  // angle per node, slack = 0
  std::vector<double> p_flow;     // per line, sending end
  std::vector<double> q_flow;
  std::vector<double> p_loss;     // per line
  std::vector<double> q_loss;
  bool converged = false;
  int iterations = 0;
  double max_mismatch = 0.0;

  std::complex<double> phasor(std::size_t node) const { return std::polar(v[node], angle_rad[node]); }
};

struct SolverOptions {
  double tolerance = 1e-8;
  int max_iterations = 100;
};

namespace detail {

inline void check_injections(const Network& net, std::span<const NodeInjection> inj) {
  if (inj.size() != net.node_count())
    throw DimensionMismatch("expected " + std::to_string(net.node_count()) +
                            " node injections, got " + std::to_string(inj.size()));
}

inline std::vector<std::complex<double>> net_load_pu(const Network& net,
                                                     std::span<const NodeInjection> inj) {
  const double s_base = net.base().s_base_va;
  std::vector<std::complex<double>> s(inj.size());
  for (std::size_t i = 0; i < inj.size(); ++i)
    s[i] = {(inj[i].p_demand_w + inj[i].p_ess_w) / s_base,
            (inj[i].q_demand_var + inj[i].q_ess_var) / s_base};
  s[net.slack()] = 0.0;
  return s;
}

// Phasor angles implied by magnitudes and sending-end flows:
// V_n = V_m - Z conj(S_mn / V_m).
inline void fill_angles(const Network& net, PowerFlowSolution& sol) {
  std::vector<std::complex<double>> phasor(net.node_count());
  phasor[net.slack()] = net.slack_voltage();
  for (std::size_t m : net.sweep_order()) {
    for (std::size_t l : net.child_lines(m)) {
      const std::size_t n = net.lines()[l].to;
      const std::complex<double> z{net.r_pu(l), net.x_pu(l)};
      const std::complex<double> s{sol.p_flow[l], sol.q_flow[l]};
      phasor[n] = phasor[m] - z * std::conj(s / phasor[m]);
    }
  }
  sol.angle_rad.resize(net.node_count());
  for (std::size_t i = 0; i < phasor.size(); ++i) sol.angle_rad[i] = std::arg(phasor[i]);
}

}  // namespace detail

// Residuals of the branch-flow equations on a solved state.
struct BranchFlowResiduals {
  double max_balance = 0.0;  // active/reactive power balance at non-slack nodes
  double max_voltage_drop = 0.0;
};

namespace detail {

inline BranchFlowResiduals residuals(const Network& net, std::span<const std::complex<double>> load,
                                     const PowerFlowSolution& sol) {
  BranchFlowResiduals res;
  for (std::size_t l = 0; l < net.lines().size(); ++l) {
    const auto& line = net.lines()[l];
    const double r = net.r_pu(l), x = net.x_pu(l);
    const double vm2 = sol.v[line.from] * sol.v[line.from];
    const double vn2 = sol.v[line.to] * sol.v[line.to];
    const double p = sol.p_flow[l], q = sol.q_flow[l];
    const double i2 = (p * p + q * q) / vm2;
    const double drop = vm2 - vn2 - 2.0 * (r * p + x * q) + i2 * (r * r + x * x);
    res.max_voltage_drop = std::max(res.max_voltage_drop, std::abs(drop));

    // Balance at the receiving node: inflow minus its loss feeds the node's
    // own load and all downstream lines.
    const std::size_t n = line.to;
    double p_out = load[n].real(), q_out = load[n].imag();
    for (std::size_t c : net.child_lines(n)) {
      p_out += sol.p_flow[c];
      q_out += sol.q_flow[c];
    }
    res.max_balance = std::max(res.max_balance, std::abs(p - i2 * r - p_out));
    res.max_balance = std::max(res.max_balance, std::abs(q - i2 * x - q_out));
  }
  return res;
}

}  // namespace detail

inline BranchFlowResiduals branch_flow_residuals(const Network& net,
                                                 std::span<const NodeInjection> inj,
                                                 const PowerFlowSolution& sol) {
  detail::check_injections(net, inj);
  const auto load = detail::net_load_pu(net, inj);
  return detail::residuals(net, load, sol);
}

// Backward/forward sweep on the branch-flow (DistFlow) equations. Exact for
// radial feeders.
inline PowerFlowSolution solve_sweep(const Network& net, std::span<const NodeInjection> inj,
                                     SolverOptions opt = {}) {
  detail::check_injections(net, inj);
  const auto load = detail::net_load_pu(net, inj);
  const std::size_t n_nodes = net.node_count();
  const std::size_t n_lines = net.lines().size();
  const auto& order = net.sweep_order();

  PowerFlowSolution sol;
  sol.p_flow.assign(n_lines, 0.0);
  sol.q_flow.assign(n_lines, 0.0);
  sol.p_loss.assign(n_lines, 0.0);
  sol.q_loss.assign(n_lines, 0.0);
  std::vector<double> v2(n_nodes, net.slack_voltage() * net.slack_voltage());
  sol.v.assign(n_nodes, net.slack_voltage());

  for (int it = 1; it <= opt.max_iterations; ++it) {
    sol.iterations = it;
    // Backward: receiving-end power plus losses from the receiving-end
    // current estimate |S_recv|^2 / V_n^2.
    for (auto k = order.rbegin(); k != order.rend(); ++k) {
      const std::size_t n = *k;
      if (n == net.slack()) continue;
      double p_recv = load[n].real(), q_recv = load[n].imag();
      for (std::size_t c : net.child_lines(n)) {
        p_recv += sol.p_flow[c];
        q_recv += sol.q_flow[c];
      }
      const std::size_t l = net.parent_line(n);
      const double i2 = (p_recv * p_recv + q_recv * q_recv) / v2[n];
      sol.p_flow[l] = p_recv + i2 * net.r_pu(l);
      sol.q_flow[l] = q_recv + i2 * net.x_pu(l);
    }
    // Forward: squared magnitudes from the sending end.
    bool collapsed = false;
    for (std::size_t m : order) {
      for (std::size_t l : net.child_lines(m)) {
        const double r = net.r_pu(l), x = net.x_pu(l);
        const double p = sol.p_flow[l], q = sol.q_flow[l];
        const double i2 = (p * p + q * q) / v2[m];
        const std::size_t n = net.lines()[l].to;
        v2[n] = v2[m] - 2.0 * (r * p + x * q) + i2 * (r * r + x * x);
        if (!(v2[n] > 0.0)) collapsed = true;
      }
      if (collapsed) break;
    }
    sol.v.resize(n_nodes);
    for (std::size_t i = 0; i < n_nodes; ++i) sol.v[i] = std::sqrt(std::max(v2[i], 0.0));
    if (collapsed) {
      sol.max_mismatch = std::numeric_limits<double>::infinity();
      break;
    }
    const auto res = detail::residuals(net, load, sol);
    sol.max_mismatch = std::max(res.max_balance, res.max_voltage_drop);
    if (!std::isfinite(sol.max_mismatch)) break;
    if (sol.max_mismatch <= opt.tolerance) {
      sol.converged = true;
      break;
    }
  }
  sol.v[net.slack()] = net.slack_voltage();
  for (std::size_t l = 0; l < n_lines; ++l) {
    const double vm = sol.v[net.lines()[l].from];
    const double i2 = vm > 0.0 ? (sol.p_flow[l] * sol.p_flow[l] + sol.q_flow[l] * sol.q_flow[l]) /
                                     (vm * vm)
                               : 0.0;
    sol.p_loss[l] = i2 * net.r_pu(l);
    sol.q_loss[l] = i2 * net.x_pu(l);
  }
  detail::fill_angles(net, sol);
  return sol;
}

// Full Newton-Raphson on the polar bus-injection mismatch equations. Used as
// an independent oracle for solve_sweep.
inline PowerFlowSolution solve_newton(const Network& net, std::span<const NodeInjection> inj,
                                      SolverOptions opt = {}) {
  using cd = std::complex<double>;
  detail::check_injections(net, inj);
  const auto load = detail::net_load_pu(net, inj);
  const std::size_t n = net.node_count();
  const std::size_t slack = net.slack();

  Eigen::MatrixXcd ybus = Eigen::MatrixXcd::Zero(n, n);
  for (std::size_t l = 0; l < net.lines().size(); ++l) {
    const auto& line = net.lines()[l];
    const cd y = 1.0 / cd{net.r_pu(l), net.x_pu(l)};
    ybus(line.from, line.from) += y;
    ybus(line.to, line.to) += y;
    ybus(line.from, line.to) -= y;
    ybus(line.to, line.from) -= y;
  }

  // Unknown ordering: angles then magnitudes of every non-slack bus.
  std::vector<std::size_t> pq;
  for (std::size_t i = 0; i < n; ++i)
    if (i != slack) pq.push_back(i);
  const std::size_t m = pq.size();

  std::vector<double> vm(n, net.slack_voltage()), va(n, 0.0);
  PowerFlowSolution sol;

  auto injections = [&](std::vector<double>& p, std::vector<double>& q) {
    p.assign(n, 0.0);
    q.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < n; ++k) {
        const cd y = ybus(i, k);
        if (y == cd{}) continue;
        const double t = va[i] - va[k];
        p[i] += vm[i] * vm[k] * (y.real() * std::cos(t) + y.imag() * std::sin(t));
        q[i] += vm[i] * vm[k] * (y.real() * std::sin(t) - y.imag() * std::cos(t));
      }
    }
  };

  std::vector<double> p_calc, q_calc;
  Eigen::VectorXd mismatch(2 * m);
  Eigen::MatrixXd jac(2 * m, 2 * m);
  for (int it = 0; it <= opt.max_iterations; ++it) {
    injections(p_calc, q_calc);
    double worst = 0.0;
    for (std::size_t a = 0; a < m; ++a) {
      const std::size_t i = pq[a];
      mismatch(a) = p_calc[i] + load[i].real();  // specified injection = -load
      mismatch(m + a) = q_calc[i] + load[i].imag();
      worst = std::max({worst, std::abs(mismatch(a)), std::abs(mismatch(m + a))});
    }
    sol.iterations = it;
    sol.max_mismatch = worst;
    if (!std::isfinite(worst)) break;
    if (worst <= opt.tolerance) {
      sol.converged = true;
      break;
    }
    if (it == opt.max_iterations) break;

    jac.setZero();
    for (std::size_t a = 0; a < m; ++a) {
      const std::size_t i = pq[a];
      for (std::size_t b = 0; b < m; ++b) {
        const std::size_t k = pq[b];
        const cd y = ybus(i, k);
        if (i == k) {
          const double g = y.real(), bb = y.imag();
          jac(a, b) = -q_calc[i] - bb * vm[i] * vm[i];
          jac(a, m + b) = p_calc[i] / vm[i] + g * vm[i];
          jac(m + a, b) = p_calc[i] - g * vm[i] * vm[i];
          jac(m + a, m + b) = q_calc[i] / vm[i] - bb * vm[i];
        } else {
          if (y == cd{}) continue;
          const double t = va[i] - va[k];
          const double g = y.real(), bb = y.imag();
          const double gs = g * std::sin(t) - bb * std::cos(t);
          const double gc = g * std::cos(t) + bb * std::sin(t);
          jac(a, b) = vm[i] * vm[k] * gs;
          jac(a, m + b) = vm[i] * gc;
          jac(m + a, b) = -vm[i] * vm[k] * gc;
          jac(m + a, m + b) = vm[i] * gs;
        }
      }
    }
    const Eigen::VectorXd dx = jac.partialPivLu().solve(-mismatch);
    for (std::size_t a = 0; a < m; ++a) {
      va[pq[a]] += dx(a);
      vm[pq[a]] += dx(m + a);
    }
  }

  sol.v = vm;
  sol.angle_rad = va;
  const std::size_t n_lines = net.lines().size();
  sol.p_flow.resize(n_lines);
  sol.q_flow.resize(n_lines);
  sol.p_loss.resize(n_lines);
  sol.q_loss.resize(n_lines);
  for (std::size_t l = 0; l < n_lines; ++l) {
    const auto& line = net.lines()[l];
    const cd z{net.r_pu(l), net.x_pu(l)};
    const cd v_from = std::polar(vm[line.from], va[line.from]);
    const cd v_to = std::polar(vm[line.to], va[line.to]);
    const cd current = (v_from - v_to) / z;
    const cd s = v_from * std::conj(current);
    const cd loss = std::norm(current) * z;
    sol.p_flow[l] = s.real();
    sol.q_flow[l] = s.imag();
    sol.p_loss[l] = loss.real();
    sol.q_loss[l] = loss.imag();
  }
  return sol;
}

struct LimitViolation {
  std::size_t node = 0;
  double excess = 0.0;  // V - v_min (negative) or V - v_max (positive)
};

inline std::vector<LimitViolation> check_limits(const PowerFlowSolution& sol, double v_min,
                                                double v_max) {
  std::vector<LimitViolation> out;
  for (std::size_t i = 0; i < sol.v.size(); ++i) {
    if (sol.v[i] < v_min)
      out.push_back({i, sol.v[i] - v_min});
    else if (sol.v[i] > v_max)
      out.push_back({i, sol.v[i] - v_max});
  }
  return out;
}

}  // namespace voltreg::grid
