#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "voltreg/coord/qp.hpp"
#include "voltreg/coord/surrogate.hpp"
#include "voltreg/errors.hpp"

namespace voltreg::coord {

// What an agent shares with its neighbours at one step.
struct AgentReport {
  std::string node;
  double a_w = 0.0;      // intended action (after scaling when coordinating)
  double v_est = 1.0;    // estimated voltage under the intended action
  double v0 = 1.0;       // estimated voltage at the reference action
  double a_ref_w = 0.0;  // reference action, e.g. the one applied last step
  double p_min_w = -60e3, p_max_w = 60e3;
  double head_lo_w = -60e3, head_hi_w = 60e3;  // SOC headroom for one step

  double lo() const { return std::max(p_min_w, head_lo_w); }
  double hi() const { return std::min(p_max_w, head_hi_w); }
};

struct CoordinationConfig {
  double beta = 1.0;
  double v_min = 0.95;
  double v_max = 1.05;
  double margin = 0.005;     // tightening of the band seen by the optimiser
  int max_iterations = 50;
  double trust_fraction = 0.1;  // trust radius as a fraction of the largest rating
  double step_tol = 1e-6;       // on the step in units of the largest rating
  double penalty = 1e4;         // weight of squared band violations in the elastic problem
  double feasibility_tol = 1e-9;

  void validate() const {
    if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("coordination scaler beta must lie in [0, 1]");
    if (!(v_max - margin > v_min + margin)) throw ConfigError("coordination voltage band is empty");
    if (max_iterations <= 0 || !(trust_fraction > 0.0) || !(penalty > 0.0))
      throw ConfigError("coordination solver settings must be positive");
  }
};

inline std::vector<double> scale_actions(std::span<const double> a_w, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("coordination scaler beta must lie in [0, 1]");
  std::vector<double> out(a_w.size());
  for (std::size_t i = 0; i < a_w.size(); ++i) out[i] = beta * a_w[i];
  return out;
}

inline double scale_capacity(double e_rated_wh, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("coordination scaler beta must lie in [0, 1]");
  return beta * e_rated_wh;
}

struct CoordinationResult {
  std::vector<double> a_star;
  std::vector<double> v_pred;     // surrogate voltages at a_star
  bool adjusted = false;          // a_star differs from the reported actions
  bool elastic = false;           // the penalty problem was needed
  bool infeasible = false;        // residual violation of the band
  double max_violation = 0.0;     // p.u., against the tightened band
  int iterations = 0;
};

namespace detail {

inline double band_excess(double v, double lo, double hi) {
  if (!std::isfinite(v)) return std::numeric_limits<double>::infinity();
  return std::max({0.0, lo - v, v - hi});
}

}  // namespace detail

// Smallest change of the reported actions that keeps every member's predicted
// voltage in band, within power and SOC limits. Solved by sequential
// linearisation of the surrogate with a trust region; each subproblem is a QP
// with identity Hessian. When a subproblem has no feasible point the band
// becomes soft with a quadratic penalty and the result is flagged.
inline CoordinationResult coordinate_step(const std::vector<AgentReport>& reports, const SensitivitySurrogate& f,
                                          const CoordinationConfig& cfg) {
  cfg.validate();
  const std::size_t n = reports.size();
  if (n != f.members()) throw DimensionMismatch("reports do not match the surrogate neighbourhood");
  CoordinationResult res;
  if (n == 0) return res;

  const double lo_band = cfg.v_min + cfg.margin, hi_band = cfg.v_max - cfg.margin;
  std::vector<double> a_t(n), v0(n), a_ref(n), lo(n), hi(n);
  double p_ref = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    a_t[j] = reports[j].a_w;
    v0[j] = reports[j].v0;
    a_ref[j] = reports[j].a_ref_w;
    lo[j] = reports[j].lo();
    hi[j] = reports[j].hi();
    if (lo[j] > hi[j]) lo[j] = hi[j] = std::clamp(0.0, lo[j], hi[j]);
    p_ref = std::max({p_ref, std::abs(reports[j].p_min_w), std::abs(reports[j].p_max_w)});
  }
  if (!(p_ref > 0.0)) p_ref = 1.0;

  auto violation = [&](const std::vector<double>& a) {
    double worst = 0.0;
    for (std::size_t k = 0; k < n; ++k) worst = std::max(worst, detail::band_excess(f.predict(k, a, v0, a_ref), lo_band, hi_band));
    return worst;
  };

  bool in_box = true;
  for (std::size_t j = 0; j < n; ++j) in_box = in_box && a_t[j] >= lo[j] && a_t[j] <= hi[j];
  if (in_box && violation(a_t) <= 0.0) {
    res.a_star = a_t;
    for (std::size_t k = 0; k < n; ++k) res.v_pred.push_back(f.predict(k, a_t, v0, a_ref));
    return res;
  }

  // Work in x = a / p_ref so that the Hessian is the identity.
  Eigen::VectorXd target(n), x(n), xlo(n), xhi(n);
  for (std::size_t j = 0; j < n; ++j) {
    target(j) = a_t[j] / p_ref;
    xlo(j) = lo[j] / p_ref;
    xhi(j) = hi[j] / p_ref;
    x(j) = std::clamp(target(j), xlo(j), xhi(j));
  }
  const double delta = cfg.trust_fraction;
  const double h = 0.5 * (cfg.v_max - cfg.v_min);
  std::vector<double> a(n);

  for (int it = 0; it < cfg.max_iterations; ++it) {
    res.iterations = it + 1;
    for (std::size_t j = 0; j < n; ++j) a[j] = x(j) * p_ref;
    Eigen::MatrixXd grad(n, n);  // row k: dV_k/dx
    Eigen::VectorXd fv(n);
    for (std::size_t k = 0; k < n; ++k) {
      fv(k) = f.predict(k, a, v0, a_ref);
      const auto g = f.action_gradient(k, a, v0, a_ref);
      for (std::size_t j = 0; j < n; ++j) grad(k, j) = g[j] * p_ref;
    }
    if (!fv.allFinite() || !grad.allFinite()) throw NumericalFailure("surrogate is not finite at the iterate");

    // Box and trust region on y, then the linearised band.
    const Eigen::Index nv = static_cast<Eigen::Index>(n);
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(4 * nv, nv);
    Eigen::VectorXd c(4 * nv);
    for (Eigen::Index j = 0; j < nv; ++j) {
      C(2 * j, j) = 1.0;
      c(2 * j) = std::max(xlo(j), x(j) - delta);
      C(2 * j + 1, j) = -1.0;
      c(2 * j + 1) = -std::min(xhi(j), x(j) + delta);
    }
    for (Eigen::Index k = 0; k < nv; ++k) {
      const double base = fv(k) - grad.row(k).dot(x);
      C.row(2 * nv + 2 * k) = grad.row(k);
      c(2 * nv + 2 * k) = lo_band - base;
      C.row(2 * nv + 2 * k + 1) = -grad.row(k);
      c(2 * nv + 2 * k + 1) = base - hi_band;
    }
    Eigen::VectorXd y;
    auto qp = solve_qp(Eigen::MatrixXd::Identity(nv, nv), -target, C, c);
    if (qp.ok()) {
      y = qp.x;
    } else {
      // Elastic form: slack s_k >= 0 per member in units of the half band.
      res.elastic = true;
      const Eigen::Index m = nv + nv;
      Eigen::MatrixXd G = Eigen::MatrixXd::Identity(m, m);
      G.bottomRightCorner(nv, nv) *= cfg.penalty;
      Eigen::VectorXd g = Eigen::VectorXd::Zero(m);
      g.head(nv) = -target;
      Eigen::MatrixXd Ce = Eigen::MatrixXd::Zero(5 * nv, m);
      Eigen::VectorXd ce(5 * nv);
      Ce.topLeftCorner(4 * nv, nv) = C;
      ce.head(4 * nv) = c;
      for (Eigen::Index k = 0; k < nv; ++k) {
        Ce(2 * nv + 2 * k, nv + k) = h;
        Ce(2 * nv + 2 * k + 1, nv + k) = h;
        Ce(4 * nv + k, nv + k) = 1.0;
        ce(4 * nv + k) = 0.0;
      }
      auto eq = solve_qp(G, g, Ce, ce);
      if (!eq.ok()) throw NumericalFailure("elastic coordination problem could not be solved");
      y = eq.x.head(nv);
    }
    const double step = (y - x).cwiseAbs().maxCoeff();
    x = y;
    if (step < cfg.step_tol) break;
  }

  res.a_star.resize(n);
  for (std::size_t j = 0; j < n; ++j) res.a_star[j] = std::clamp(x(j) * p_ref, lo[j], hi[j]);
  for (std::size_t k = 0; k < n; ++k) res.v_pred.push_back(f.predict(k, res.a_star, v0, a_ref));
  res.max_violation = violation(res.a_star);
  res.infeasible = res.max_violation > cfg.feasibility_tol;
  for (std::size_t j = 0; j < n; ++j) res.adjusted = res.adjusted || res.a_star[j] != a_t[j];
  return res;
}

}  // namespace voltreg::coord
