#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "voltreg/coord/coordinate.hpp"
#include "voltreg/coord/qp.hpp"
#include "voltreg/coord/surrogate.hpp"

using namespace voltreg;
using namespace voltreg::coord;

namespace {

// Surrogate whose member voltages are v0_k + sum_j s[k][j] * a_j / P (+ an
// optional quadratic self term q_k * (a_k / P)^2).
SensitivitySurrogate linear_surrogate(const std::vector<std::vector<double>>& s, double p_w,
                                      std::vector<double> q = {}) {
  const std::size_t n = s.size();
  SensitivitySurrogate f;
  f.p_scale_w.assign(n, p_w);
  for (std::size_t k = 0; k < n; ++k) {
    auto m = approx::PolyModel::zeros(2 * n, 2);
    for (std::size_t j = 0; j < n; ++j) {
      std::vector<int> e(2 * n, 0);
      e[j] = 1;
      m.coefficient(e) = s[k][j];
    }
    std::vector<int> e(2 * n, 0);
    e[n + k] = 1;
    m.coefficient(e) = 1.0;
    if (!q.empty()) {
      std::vector<int> e2(2 * n, 0);
      e2[k] = 2;
      m.coefficient(e2) = q[k];
    }
    f.models.push_back(m);
  }
  return f;
}

std::vector<AgentReport> reports(const std::vector<double>& a, const std::vector<double>& v0) {
  std::vector<AgentReport> r(a.size());
  for (std::size_t j = 0; j < a.size(); ++j) {
    r[j].node = "N" + std::to_string(j);
    r[j].a_w = a[j];
    r[j].v0 = r[j].v_est = v0[j];
  }
  return r;
}

// Best integer-watt point of the coordination problem in a window around the
// reported actions.
std::vector<double> grid_oracle(const std::vector<AgentReport>& rep, const SensitivitySurrogate& f,
                                const CoordinationConfig& cfg, int half_window) {
  const std::size_t n = rep.size();
  const double lo_b = cfg.v_min + cfg.margin, hi_b = cfg.v_max - cfg.margin;
  std::vector<double> v0(n), best;
  for (std::size_t j = 0; j < n; ++j) v0[j] = rep[j].v0;
  double best_obj = std::numeric_limits<double>::infinity();
  std::vector<int> off(n, -half_window);
  std::vector<double> a(n);
  while (true) {
    bool ok = true;
    double obj = 0.0;
    for (std::size_t j = 0; j < n && ok; ++j) {
      a[j] = std::round(rep[j].a_w) + off[j];
      ok = a[j] >= rep[j].lo() && a[j] <= rep[j].hi();
      obj += (a[j] - rep[j].a_w) * (a[j] - rep[j].a_w);
    }
    if (ok && obj < best_obj) {
      for (std::size_t k = 0; k < n && ok; ++k) {
        const double v = f.predict(k, a, v0);
        ok = v >= lo_b && v <= hi_b;
      }
      if (ok) {
        best_obj = obj;
        best = a;
      }
    }
    std::size_t j = 0;
    while (j < n && ++off[j] > half_window) off[j++] = -half_window;
    if (j == n) break;
  }
  return best;
}

// Any point closer to the reported actions than a_star lies inside a box whose
// half width is the Euclidean length of the adjustment.
int oracle_window(const std::vector<double>& a_star, const std::vector<double>& a) {
  double sq = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) sq += (a_star[j] - a[j]) * (a_star[j] - a[j]);
  return static_cast<int>(std::ceil(std::sqrt(sq))) + 3;
}

}  // namespace

TEST(Qp, SatisfiesKktOnRandomProblems) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + trial % 5, p = 1 + (trial * 7) % 9;
    Eigen::MatrixXd M(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) M(i, j) = nd(rng);
    Eigen::MatrixXd G = M.transpose() * M + Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd g(n), c(p);
    Eigen::MatrixXd C(p, n);
    for (int i = 0; i < n; ++i) g(i) = 3 * nd(rng);
    // feasible by construction: a known point satisfies every row
    Eigen::VectorXd x0(n);
    for (int i = 0; i < n; ++i) x0(i) = nd(rng);
    for (int r = 0; r < p; ++r) {
      for (int i = 0; i < n; ++i) C(r, i) = nd(rng);
      c(r) = C.row(r).dot(x0) - std::abs(nd(rng));
    }
    auto res = solve_qp(G, g, C, c);
    ASSERT_TRUE(res.ok()) << trial;
    const Eigen::VectorXd slack = C * res.x - c;
    EXPECT_GE(slack.minCoeff(), -1e-9);
    EXPECT_GE(res.multipliers.minCoeff(), -1e-10);
    const Eigen::VectorXd stat = G * res.x + g - C.transpose() * res.multipliers;
    EXPECT_LE(stat.cwiseAbs().maxCoeff(), 1e-8) << trial;
    for (int r = 0; r < p; ++r) EXPECT_LE(std::abs(res.multipliers(r) * slack(r)), 1e-8);
  }
}

TEST(Qp, UnconstrainedMinimumWhenInactive) {
  Eigen::MatrixXd G = Eigen::MatrixXd::Identity(2, 2);
  Eigen::VectorXd g(2);
  g << -1.0, 2.0;
  Eigen::MatrixXd C(1, 2);
  C << 1.0, 0.0;
  Eigen::VectorXd c(1);
  c << -5.0;
  auto res = solve_qp(G, g, C, c);
  ASSERT_TRUE(res.ok());
  EXPECT_DOUBLE_EQ(res.x(0), 1.0);
  EXPECT_DOUBLE_EQ(res.x(1), -2.0);
  EXPECT_TRUE(res.active.empty());
}

TEST(Qp, CertifiesInfeasibility) {
  Eigen::MatrixXd G = Eigen::MatrixXd::Identity(2, 2);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(2);
  Eigen::MatrixXd C(3, 2);
  C << 1, 0, -1, 0, 0, 1;
  Eigen::VectorXd c(3);
  c << 1.0, 0.0, -3.0;  // x0 >= 1 and x0 <= 0
  EXPECT_EQ(solve_qp(G, g, C, c).status, QpStatus::infeasible);
}

TEST(Qp, RejectsIndefiniteHessian) {
  Eigen::MatrixXd G(1, 1);
  G << -1.0;
  EXPECT_THROW(solve_qp(G, Eigen::VectorXd::Zero(1), Eigen::MatrixXd(0, 1), Eigen::VectorXd(0)), NumericalFailure);
}

TEST(Scale, Actions) {
  std::vector<double> a{60e3, -30e3, 0.0};
  EXPECT_EQ(scale_actions(a, 1.0), a);
  for (double v : scale_actions(a, 0.0)) EXPECT_EQ(v, 0.0);
  EXPECT_NEAR(scale_actions(a, 0.2)[0], 12e3, 1e-9);
  EXPECT_NEAR(scale_capacity(3e6, 0.5), 1.5e6, 1e-9);
  EXPECT_THROW(scale_actions(a, 1.2), ConfigError);
  EXPECT_THROW(scale_actions(a, -0.1), ConfigError);
}

TEST(Surrogate, ReproducesLinearPlant) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ua(-60e3, 60e3), uv(0.93, 1.02);
  std::vector<NeighborhoodSample> logs;
  const double k1 = 0.03, k2 = 0.01;
  for (int i = 0; i < 600; ++i) {
    NeighborhoodSample s;
    s.a_w = {ua(rng), ua(rng)};
    s.v_est = {uv(rng), uv(rng)};
    const double sum = (s.a_w[0] + s.a_w[1]) / 60e3;
    s.v_true = {s.v_est[0] - k1 * sum, s.v_est[1] - k2 * sum};
    logs.push_back(s);
  }
  auto f = fit_sensitivity(logs, {60e3, 60e3});
  EXPECT_EQ(f.models[0].degree, 4);
  EXPECT_LE(f.val_rmse, 1e-6);
  EXPECT_LE(f.val_rmse, 10 * f.train_rmse + 1e-9);
  std::vector<double> a{10e3, -5e3}, v{0.97, 0.99};
  EXPECT_NEAR(f.predict(0, a, v), 0.97 - k1 * 5e3 / 60e3, 1e-6);
  // charging lowers the voltage
  auto g = f.action_gradient(0, a, v);
  EXPECT_LT(g[0], 0.0);
  EXPECT_LT(g[1], 0.0);
}

TEST(Coordinate, FeasibleReportsReturnedExactly) {
  auto f = linear_surrogate({{-0.05, -0.02}, {-0.02, -0.05}}, 60e3);
  auto rep = reports({12345.678, -3210.5}, {1.0, 0.99});
  CoordinationConfig cfg;
  auto res = coordinate_step(rep, f, cfg);
  EXPECT_FALSE(res.adjusted);
  EXPECT_FALSE(res.infeasible);
  EXPECT_EQ(res.a_star[0], 12345.678);
  EXPECT_EQ(res.a_star[1], -3210.5);
}

// The oracle is exact to its resolution when the binding constraint has a
// small integer-ratio normal: lattice points then lie on it at most 4 W apart.
TEST(Coordinate, TwoAgentsMatchGridOracle) {
  CoordinationConfig cfg;
  const int ratios[][2] = {{1, 1}, {2, 1}, {1, 2}, {3, 1}, {3, 2}, {2, 3}};
  for (int trial = 0; trial < 6; ++trial) {
    const double s11 = 0.02 * ratios[trial][0], s12 = 0.02 * ratios[trial][1], s21 = 0.005, s22 = 0.03;
    auto f = linear_surrogate({{-s11, -s12}, {-s21, -s22}}, 60e3);
    std::vector<double> a{30e3 + 1000 * trial, 25e3};
    std::vector<double> v0(2);
    v0[0] = cfg.v_min + cfg.margin + (s11 * a[0] + s12 * a[1]) / 60e3 - 0.0004 - 0.0002 * trial;
    v0[1] = cfg.v_min + cfg.margin + (s21 * a[0] + s22 * a[1]) / 60e3 + 0.01;
    auto rep = reports(a, v0);
    auto res = coordinate_step(rep, f, cfg);
    ASSERT_TRUE(res.adjusted);
    ASSERT_FALSE(res.infeasible);
    auto best = grid_oracle(rep, f, cfg, oracle_window(res.a_star, a));
    ASSERT_EQ(best.size(), 2u) << trial;
    for (int j = 0; j < 2; ++j) EXPECT_NEAR(res.a_star[j], best[j], 2.0) << trial;
  }
}

TEST(Coordinate, ThreeAgentsMatchGridOracle) {
  CoordinationConfig cfg;
  auto f = linear_surrogate({{-0.06, -0.03, -0.02}, {-0.02, -0.05, -0.015}, {-0.01, -0.02, -0.07}}, 60e3);
  std::vector<double> a{20e3, 35e3, -10e3};
  std::vector<double> v0{0.975, 0.99, 0.99};
  const double v_at = f.predict(0, a, v0);
  v0[0] += cfg.v_min + cfg.margin - v_at - 0.0002;
  auto rep = reports(a, v0);
  auto res = coordinate_step(rep, f, cfg);
  ASSERT_TRUE(res.adjusted);
  ASSERT_FALSE(res.infeasible);
  auto best = grid_oracle(rep, f, cfg, oracle_window(res.a_star, a));
  ASSERT_EQ(best.size(), 3u);
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(res.a_star[j], best[j], 2.0);
}

// For curved or incommensurate constraints the lattice optimum can sit several
// watts along the constraint; the continuous solution must still be feasible
// and at least as good as every lattice point.
TEST(Coordinate, NoLatticePointBeatsSolution) {
  CoordinationConfig cfg;
  auto f = linear_surrogate({{-0.0613, -0.0217, -0.0101}, {-0.02, -0.05, -0.015}, {-0.01, -0.02, -0.07}}, 60e3,
                            {-0.01, 0.02, -0.015});
  std::vector<double> a{20e3, 35e3, -10e3};
  std::vector<double> v0{0.975, 0.99, 0.99};
  const double v_at = f.predict(0, a, v0);
  v0[0] += cfg.v_min + cfg.margin - v_at - 0.0002;
  auto rep = reports(a, v0);
  auto res = coordinate_step(rep, f, cfg);
  ASSERT_FALSE(res.infeasible);
  auto best = grid_oracle(rep, f, cfg, oracle_window(res.a_star, a));
  ASSERT_EQ(best.size(), 3u);
  double obj_res = 0.0, obj_best = 0.0;
  for (int j = 0; j < 3; ++j) {
    obj_res += (res.a_star[j] - a[j]) * (res.a_star[j] - a[j]);
    obj_best += (best[j] - a[j]) * (best[j] - a[j]);
    EXPECT_NEAR(res.a_star[j], best[j], 20.0);
  }
  EXPECT_LE(obj_res, obj_best * (1 + 1e-9));
  EXPECT_GE(res.v_pred[0], cfg.v_min + cfg.margin - 1e-9);
}

TEST(Coordinate, RespectsSocHeadroom) {
  CoordinationConfig cfg;
  auto f = linear_surrogate({{-0.05, -0.03}, {-0.03, -0.05}}, 60e3);
  auto rep = reports({40e3, 40e3}, {0.99, 0.99});
  rep[0].head_lo_w = 35e3;  // cannot go below 35 kW this step
  auto res = coordinate_step(rep, f, cfg);
  EXPECT_GE(res.a_star[0], 35e3 - 1e-6);
  EXPECT_FALSE(res.infeasible);
  EXPECT_GE(res.v_pred[0], cfg.v_min + cfg.margin - 1e-9);
  EXPECT_GE(res.v_pred[1], cfg.v_min + cfg.margin - 1e-9);
}

TEST(Coordinate, InfeasibleIsFlaggedNotThrown) {
  CoordinationConfig cfg;
  auto f = linear_surrogate({{-0.02, -0.01}, {-0.01, -0.02}}, 60e3);
  auto rep = reports({0.0, 0.0}, {0.90, 0.97});  // full discharge adds only 0.03
  auto res = coordinate_step(rep, f, cfg);
  EXPECT_TRUE(res.infeasible);
  EXPECT_TRUE(res.elastic);
  EXPECT_GT(res.max_violation, 0.0);
  // least violation: both discharge at full power
  EXPECT_NEAR(res.a_star[0], -60e3, 1.0);
  EXPECT_NEAR(res.a_star[1], -60e3, 1.0);
}

TEST(Coordinate, BoxSafetyUnderFuzz) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ua(-80e3, 80e3), uv(0.9, 1.08), uh(-60e3, 60e3), us(0.01, 0.08);
  CoordinationConfig cfg;
  for (int trial = 0; trial < 300; ++trial) {
    auto f = linear_surrogate({{-us(rng), -us(rng) / 3}, {-us(rng) / 3, -us(rng)}}, 60e3, {0.01, -0.01});
    auto rep = reports({ua(rng), ua(rng)}, {uv(rng), uv(rng)});
    for (auto& r : rep) {
      const double a = uh(rng), b = uh(rng);
      r.head_lo_w = std::min(a, b);
      r.head_hi_w = std::max(a, b);
    }
    auto res = coordinate_step(rep, f, cfg);
    for (std::size_t j = 0; j < 2; ++j) {
      EXPECT_GE(res.a_star[j], rep[j].lo() - 1e-9);
      EXPECT_LE(res.a_star[j], rep[j].hi() + 1e-9);
    }
    if (!res.infeasible)
      for (double v : res.v_pred) {
        EXPECT_GE(v, cfg.v_min + cfg.margin - 1e-9);
        EXPECT_LE(v, cfg.v_max - cfg.margin + 1e-9);
      }
  }
}
