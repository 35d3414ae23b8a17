#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "voltreg/errors.hpp"

namespace voltreg::coord {

enum class QpStatus { optimal, infeasible, iteration_limit };

struct QpResult {
  Eigen::VectorXd x;
  QpStatus status = QpStatus::infeasible;
  double objective = 0.0;
  int iterations = 0;
  std::vector<int> active;      // indices of active inequality rows
  Eigen::VectorXd multipliers;  // one per row, zero when inactive
  bool ok() const { return status == QpStatus::optimal; }
};

namespace detail {

// Appends the column held in d (= J' n) to the factorisation, rotating J so
// that d has no entries below position iq. False when the new constraint is
// numerically dependent on the active ones.
inline bool gi_add(Eigen::MatrixXd& R, Eigen::MatrixXd& J, Eigen::VectorXd& d, int& iq, double& r_norm) {
  const int n = static_cast<int>(J.rows());
  for (int j = n - 1; j >= iq + 1; --j) {
    double cc = d(j - 1), ss = d(j);
    const double h = std::hypot(cc, ss);
    if (h == 0.0) continue;
    d(j) = 0.0;
    ss /= h;
    cc /= h;
    if (cc < 0.0) {
      cc = -cc;
      ss = -ss;
      d(j - 1) = -h;
    } else {
      d(j - 1) = h;
    }
    const double xny = ss / (1.0 + cc);
    for (int k = 0; k < n; ++k) {
      const double t1 = J(k, j - 1), t2 = J(k, j);
      J(k, j - 1) = t1 * cc + t2 * ss;
      J(k, j) = xny * (t1 + J(k, j - 1)) - t2;
    }
  }
  ++iq;
  R.col(iq - 1).head(iq) = d.head(iq);
  if (std::abs(d(iq - 1)) <= std::numeric_limits<double>::epsilon() * r_norm) return false;
  r_norm = std::max(r_norm, std::abs(d(iq - 1)));
  return true;
}

inline void gi_delete(Eigen::MatrixXd& R, Eigen::MatrixXd& J, std::vector<int>& A, Eigen::VectorXd& u, int& iq,
                      int l) {
  const int n = static_cast<int>(J.rows());
  int qq = -1;
  for (int i = 0; i < iq; ++i)
    if (A[i] == l) {
      qq = i;
      break;
    }
  if (qq < 0) return;
  for (int i = qq; i < iq - 1; ++i) {
    A[i] = A[i + 1];
    u(i) = u(i + 1);
    R.col(i) = R.col(i + 1);
  }
  A[iq - 1] = A[iq];
  u(iq - 1) = u(iq);
  A[iq] = -1;
  u(iq) = 0.0;
  R.col(iq - 1).setZero();
  --iq;
  if (iq == 0) return;
  for (int j = qq; j < iq; ++j) {
    double cc = R(j, j), ss = R(j + 1, j);
    const double h = std::hypot(cc, ss);
    if (h == 0.0) continue;
    cc /= h;
    ss /= h;
    R(j + 1, j) = 0.0;
    if (cc < 0.0) {
      R(j, j) = -h;
      cc = -cc;
      ss = -ss;
    } else {
      R(j, j) = h;
    }
    const double xny = ss / (1.0 + cc);
    for (int k = j + 1; k < iq; ++k) {
      const double t1 = R(j, k), t2 = R(j + 1, k);
      R(j, k) = t1 * cc + t2 * ss;
      R(j + 1, k) = xny * (t1 + R(j, k)) - t2;
    }
    for (int k = 0; k < n; ++k) {
      const double t1 = J(k, j), t2 = J(k, j + 1);
      J(k, j) = t1 * cc + t2 * ss;
      J(k, j + 1) = xny * (J(k, j) + t1) - t2;
    }
  }
}

}  // namespace detail

// Dual active-set method of Goldfarb and Idnani for
//   min 0.5 x'Gx + g'x   subject to   C x >= c,
// with G symmetric positive definite. Starts from the unconstrained minimum
// and adds violated rows one at a time; an empty step set certifies
// infeasibility.
inline QpResult solve_qp(const Eigen::MatrixXd& G, const Eigen::VectorXd& g, const Eigen::MatrixXd& C,
                         const Eigen::VectorXd& c, int max_iter = 1000, double tol = 1e-12) {
  const int n = static_cast<int>(G.rows());
  const int p = static_cast<int>(C.rows());
  if (G.cols() != n || g.size() != n || (p > 0 && C.cols() != n) || c.size() != p)
    throw DimensionMismatch("QP data have inconsistent sizes");
  Eigen::LLT<Eigen::MatrixXd> llt(G);
  if (llt.info() != Eigen::Success) throw NumericalFailure("QP Hessian is not positive definite");

  QpResult res;
  res.multipliers = Eigen::VectorXd::Zero(p);
  const Eigen::MatrixXd L = llt.matrixL();
  Eigen::MatrixXd J = L.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(n, n)).transpose();
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(n, n);
  double r_norm = 1.0;
  Eigen::VectorXd x = llt.solve(-g);
  std::vector<int> A(n + 1, -1);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n + 1);
  std::vector<bool> active(p, false);
  int iq = 0;
  constexpr double inf = std::numeric_limits<double>::infinity();

  auto finish = [&](QpStatus st) {
    res.x = x;
    res.status = st;
    res.objective = 0.5 * x.dot(G * x) + g.dot(x);
    res.active.clear();
    for (int k = 0; k < iq; ++k) {
      res.active.push_back(A[k]);
      res.multipliers(A[k]) = u(k);
    }
    return res;
  };

  Eigen::VectorXd d(n), z(n), r(n);
  while (true) {
    if (++res.iterations > max_iter) return finish(QpStatus::iteration_limit);
    // most violated inactive row
    int ip = -1;
    double s_min = 0.0;
    for (int i = 0; i < p; ++i) {
      if (active[i]) continue;
      const double s = C.row(i).dot(x) - c(i);
      const double scale = 1.0 + std::abs(c(i)) + C.row(i).cwiseAbs().maxCoeff() * x.cwiseAbs().maxCoeff();
      if (s < -tol * scale && s < s_min) {
        s_min = s;
        ip = i;
      }
    }
    if (ip < 0) return finish(QpStatus::optimal);

    const Eigen::VectorXd np = C.row(ip).transpose();
    u(iq) = 0.0;
    A[iq] = ip;
    double s_ip = s_min;
    while (true) {
      if (++res.iterations > max_iter) return finish(QpStatus::iteration_limit);
      d = J.transpose() * np;
      z = J.rightCols(n - iq) * d.tail(n - iq);
      if (iq > 0) r.head(iq) = R.topLeftCorner(iq, iq).triangularView<Eigen::Upper>().solve(d.head(iq));
      double t1 = inf;
      int l = -1;
      for (int k = 0; k < iq; ++k) {
        if (r(k) > 0.0) {
          const double t = u(k) / r(k);
          if (t < t1) {
            t1 = t;
            l = A[k];
          }
        }
      }
      double t2 = inf;
      if (z.norm() > std::numeric_limits<double>::epsilon() * (1.0 + np.norm())) {
        t2 = -s_ip / z.dot(np);
        if (t2 < 0.0) t2 = inf;
      }
      const double t = std::min(t1, t2);
      if (t == inf) return finish(QpStatus::infeasible);
      if (t2 == inf) {
        // partial step in the dual only
        for (int k = 0; k < iq; ++k) u(k) -= t * r(k);
        u(iq) += t;
        active[l] = false;
        detail::gi_delete(R, J, A, u, iq, l);
        continue;
      }
      x += t * z;
      for (int k = 0; k < iq; ++k) u(k) -= t * r(k);
      u(iq) += t;
      if (t == t2) {
        if (!detail::gi_add(R, J, d, iq, r_norm)) return finish(QpStatus::infeasible);
        active[ip] = true;
        break;
      }
      active[l] = false;
      detail::gi_delete(R, J, A, u, iq, l);
      s_ip = np.dot(x) - c(ip);
    }
  }
}

}  // namespace voltreg::coord
