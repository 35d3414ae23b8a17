#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "support.hpp"
#include "voltreg/experiment/scenario.hpp"
#include "voltreg/thevenin/corrector.hpp"
#include "voltreg/thevenin/pipeline.hpp"
#include "voltreg/thevenin/thevenin.hpp"

using namespace voltreg;
using namespace voltreg::thevenin;

namespace {

// Phasor sample at the load bus of a two-bus circuit, from a tight power flow.
SmSample two_bus_sample(const grid::Network& net, double p_w, double q_var, long long t) {
  std::vector<grid::NodeInjection> inj(2);
  inj[1].p_demand_w = p_w;
  inj[1].q_demand_var = q_var;
  auto sol = grid::solve_newton(net, inj, {.tolerance = 1e-14, .max_iterations = 50});
  const double s = net.base().s_base_va;
  return SmSample::from_phasor(t, sol.phasor(1), p_w / s, q_var / s);
}

}  // namespace

TEST(Thevenin, TwoBusRecoversSourceAndLine) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> r(0.01, 0.3), x(0.005, 0.2), vs(0.97, 1.04), p(-20e3, 60e3);
  for (int k = 0; k < 50; ++k) {
    const double r_ohm = r(rng), x_ohm = x(rng), slack = vs(rng);
    auto net = testsupport::two_bus(r_ohm, x_ohm, slack);
    const double zb = net.base().z_base_ohm();
    const double p1 = p(rng), p2 = p1 + 15e3;
    auto s1 = two_bus_sample(net, p1, 0.3 * p1, 0);
    auto s2 = two_bus_sample(net, p2, 0.1 * p2, 1);
    auto th = estimate_thevenin(s1, s2, {});
    ASSERT_TRUE(th.fresh);
    EXPECT_NEAR(th.e_th, slack, 1e-9);
    EXPECT_NEAR(th.r_th, r_ohm / zb, 1e-9);
    EXPECT_NEAR(th.x_th, x_ohm / zb, 1e-9);
  }
}

TEST(Thevenin, GuardKeepsPreviousParameters) {
  TheveninParams prev{1.02, 0.03, 0.01, true};
  auto s = SmSample::from_meter(0, 0.98, 0.2, 0.05);
  auto same = estimate_thevenin(s, s, prev);
  EXPECT_FALSE(same.fresh);
  EXPECT_EQ(same.e_th, prev.e_th);
  EXPECT_EQ(same.r_th, prev.r_th);
  EXPECT_EQ(same.x_th, prev.x_th);

  // just under and just over the threshold
  SmSample a{0, {1.0, 0.0}, {0.3, -0.1}, 0.3, 0.1};
  SmSample b = a;
  b.i += cplx{0.99e-4, 0.0};
  b.v -= cplx{1e-6, 0.0};
  EXPECT_FALSE(estimate_thevenin(a, b, prev).fresh);
  b.i = a.i + cplx{1.01e-4, 0.0};
  EXPECT_TRUE(estimate_thevenin(a, b, prev).fresh);
}

TEST(Thevenin, GuardFiresForAllSmallCurrentSteps) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  TheveninParams prev{1.01, 0.02, 0.01, true};
  for (int k = 0; k < 2000; ++k) {
    SmSample a{0, {1.0 + 0.05 * u(rng), 0.02 * u(rng)}, {u(rng), u(rng)}, 0, 0};
    SmSample b{1, {1.0 + 0.05 * u(rng), 0.02 * u(rng)}, a.i, 0, 0};
    const cplx d{u(rng), u(rng)};
    b.i += d / std::abs(d) * (1e-4 * std::abs(u(rng)) * 0.999);
    auto th = estimate_thevenin(a, b, prev);
    EXPECT_FALSE(th.fresh);
    EXPECT_TRUE(std::isfinite(th.e_th));
  }
}

TEST(Thevenin, NegativeResistanceClampedToZero) {
  SmSample a{0, {1.0, 0.0}, {0.1, 0.0}, 0, 0};
  SmSample b{1, {1.01, 0.0}, {0.2, 0.0}, 0, 0};  // voltage rising with current
  auto th = estimate_thevenin(a, b, {});
  EXPECT_TRUE(th.fresh);
  EXPECT_EQ(th.r_th, 0.0);
}

TEST(Quartic, ZeroPowerReturnsSourceExactly) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> e(0.5, 1.5), z(0.0, 0.5);
  for (int k = 0; k < 1000; ++k) {
    TheveninParams th{e(rng), z(rng), z(rng), true};
    auto v = solve_quartic_voltage(th, 0.0, 0.0);
    ASSERT_TRUE(v);
    EXPECT_EQ(*v, th.e_th);
    auto w = solve_quartic_voltage({th.e_th, 0.0, 0.0, true}, 0.7, -0.2);
    ASSERT_TRUE(w);
    EXPECT_EQ(*w, th.e_th);
  }
}

TEST(Quartic, SubstituteBack) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> e(0.8, 1.2), z(0.0, 0.3), pq(-2.0, 2.0);
  int feasible = 0;
  for (int k = 0; k < 20000; ++k) {
    TheveninParams th{e(rng), z(rng), z(rng), true};
    const double p = pq(rng), q = pq(rng);
    auto v = solve_quartic_voltage(th, p, q);
    const auto quartic = Quartic::of(th, p, q);
    if (!v) {
      EXPECT_LT(quartic.b * quartic.b - 4 * quartic.c, 1e-12);
      continue;
    }
    ++feasible;
    EXPECT_LE(std::abs(quartic.residual(*v)), 1e-9);
  }
  EXPECT_GT(feasible, 10000);
}

TEST(Quartic, NegatedLoadMatchesTwoBusPowerFlow) {
  auto net = testsupport::two_bus(0.2, 0.08, 1.0);
  const double zb = net.base().z_base_ohm();
  TheveninParams th{1.0, 0.2 / zb, 0.08 / zb, true};
  for (double p_w : {-20e3, 0.0, 10e3, 40e3, 80e3}) {
    std::vector<grid::NodeInjection> inj(2);
    inj[1].p_demand_w = p_w;
    inj[1].q_demand_var = 0.25 * p_w;
    auto sol = grid::solve_newton(net, inj, {.tolerance = 1e-13, .max_iterations = 50});
    const double s = net.base().s_base_va;
    auto v = solve_quartic_voltage(th, -p_w / s, -0.25 * p_w / s);
    ASSERT_TRUE(v);
    EXPECT_NEAR(*v, sol.v[1], 1e-10) << p_w;
  }
}

TEST(Quartic, BeyondLoadabilityIsInfeasible) {
  TheveninParams th{1.0, 0.5, 0.5, true};
  EXPECT_FALSE(solve_quartic_voltage(th, -5.0, -5.0));
}

TEST(Corrector, RecoversCubicPerSegment) {
  CorrectorOptions opt;
  std::vector<std::pair<double, double>> hist;
  auto f0 = [](double v) { return 0.2 + 0.5 * v + 0.1 * v * v * v; };
  auto f1 = [](double v) { return 1.0 - 0.3 * (v - 0.98) + 2.0 * (v - 0.98) * (v - 0.98); };
  auto f2 = [](double v) { return 0.9 + 0.05 * v - 0.01 * v * v + 0.02 * v * v * v; };
  for (int i = 0; i <= 200; ++i) {
    const double a = 0.5 + 0.475 * i / 201.0;
    const double b = 0.975 + 0.025 * i / 200.0;
    const double c = 1.0 + 1e-4 + 0.5 * i / 200.0;
    hist.push_back({a, f0(a)});
    hist.push_back({b, f1(b)});
    hist.push_back({c, f2(c)});
  }
  opt.clamp_lo = opt.clamp_hi = 0.0;
  auto fit = fit_piecewise(hist, opt);
  for (bool fb : fit.fallback) EXPECT_FALSE(fb);
  double worst = 0.0;
  for (auto [v, y] : hist) worst = std::max(worst, std::abs(fit.corrector.correct(v) - y));
  EXPECT_LE(worst, 1e-8);
}

TEST(Corrector, SparseSegmentFallsBackToIdentity) {
  std::vector<std::pair<double, double>> hist;
  for (int i = 0; i < 50; ++i) {
    const double v = 0.976 + 0.02 * i / 50.0;
    hist.push_back({v, v + 0.01});
  }
  hist.push_back({1.2, 1.0});  // single high point
  auto fit = fit_piecewise(hist);
  EXPECT_TRUE(fit.fallback[0]);
  EXPECT_FALSE(fit.fallback[1]);
  EXPECT_TRUE(fit.fallback[2]);
  EXPECT_EQ(fit.points[2], 1u);
  EXPECT_DOUBLE_EQ(fit.corrector.correct(1.03), 1.03);
  EXPECT_DOUBLE_EQ(fit.corrector.correct(0.95), 0.95);
}

TEST(Corrector, IdentityAndBoundary) {
  auto id = PiecewiseCorrector::identity();
  for (double v : {0.0, 0.5, 0.975, 1.0, 3.0, 100.0}) EXPECT_EQ(id.correct(v), v);
  EXPECT_EQ(id.segment_of(0.975), 1u);
  EXPECT_EQ(id.segment_of(0.975 - 1e-12), 0u);
  EXPECT_EQ(id.segment_of(1.0), 1u);
  EXPECT_EQ(id.segment_of(1.0 + 1e-12), 2u);

  // segments mapping to distinct constants expose which branch is used
  std::vector<std::pair<double, double>> hist;
  for (int i = 0; i < 30; ++i) {
    hist.push_back({0.90 + 0.002 * i, 0.93});
    hist.push_back({0.975 + 0.0008 * i, 0.99});
    hist.push_back({1.01 + 0.002 * i, 1.02});
  }
  auto c = fit_piecewise(hist).corrector;
  EXPECT_NEAR(c.correct(390.0 / 400.0), 0.99, 1e-9);
  EXPECT_NEAR(c.correct(1.0), 0.99, 1e-9);
}

TEST(Corrector, TotalOverWideRange) {
  std::vector<std::pair<double, double>> hist;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.85, 1.1);
  for (int i = 0; i < 500; ++i) {
    const double v = u(rng);
    hist.push_back({v, 0.5 * (v + 1.0)});
  }
  auto c = fit_piecewise(hist).corrector;
  for (double v = 0.0; v <= 1e6; v = v * 1.5 + 1e-3) {
    const double y = c.correct(v);
    EXPECT_TRUE(std::isfinite(y));
    EXPECT_GE(y, 0.9);
    EXPECT_LE(y, 1.05);
  }
  EXPECT_TRUE(std::isfinite(c.correct(std::numeric_limits<double>::quiet_NaN())));
}

TEST(Corrector, EmptyHistoryThrows) {
  EXPECT_THROW(fit_piecewise({}), UnderdeterminedSegment);
  EXPECT_THROW(fit_piecewise({{std::nan(""), 1.0}}), UnderdeterminedSegment);
}

class CigrePipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    net_ = new grid::Network(testsupport::cigre());
    assets::SyntheticOptions o;
    o.days = 15;
    o.seed = 21;
    auto prof = assets::synthetic_profile(experiment::cigre_residential_loads(), o);
    std::vector<std::size_t> ess{net_->index_of("R9"), net_->index_of("R14"), net_->index_of("R16")};
    const std::size_t r10 = net_->index_of("R10");
    auto hist = prof.slice(0, 14 * 96);
    auto rec = experiment::record(*net_, hist, ess, experiment::random_actions(3, hist.steps(), -60e3, 60e3, 2),
                                  {r10});
    auto day = experiment::record(*net_, prof.slice(14 * 96, 96), ess, nullptr, {r10});
    hist_ = new MeterSeries(rec.meters.at(r10));
    day_ = new MeterSeries(day.meters.at(r10));
    PipelineTrainOptions po;
    po.train.epochs = 20;
    auto fitted = fit_local_pipeline(*hist_, 0.6, po);
    pipeline_ = new LocalPipeline(std::move(fitted.first));
    report_ = new PipelineReport(std::move(fitted.second));
  }
  static void TearDownTestSuite() {
    delete net_;
    delete hist_;
    delete day_;
    delete pipeline_;
    delete report_;
  }
  static grid::Network* net_;
  static MeterSeries *hist_, *day_;
  static LocalPipeline* pipeline_;
  static PipelineReport* report_;
};
grid::Network* CigrePipeline::net_ = nullptr;
MeterSeries* CigrePipeline::hist_ = nullptr;
MeterSeries* CigrePipeline::day_ = nullptr;
LocalPipeline* CigrePipeline::pipeline_ = nullptr;
PipelineReport* CigrePipeline::report_ = nullptr;

TEST_F(CigrePipeline, NoControlDayWithinBand) {
  auto rows = estimation_trace(*pipeline_, *day_);
  ASSERT_EQ(rows.size(), 94u);
  std::size_t in2 = 0, in5 = 0;
  for (const auto& r : rows) {
    in2 += std::abs(r.rel_err2) <= 0.02;
    in5 += std::abs(r.rel_err1) <= 0.05;
  }
  EXPECT_GE(in2, 0.9 * rows.size());
  EXPECT_GE(in5, 0.9 * rows.size());
  EXPECT_LE(report_->val_rmse, 10 * report_->train_rmse + 1e-3);
}

TEST_F(CigrePipeline, SpikeIsCorrectedIntoBand) {
  const double y = pipeline_->corrector.correct(100.0);
  EXPECT_GE(y, 0.9);
  EXPECT_LE(y, 1.05);
}

TEST_F(CigrePipeline, TraceCsvHeader) {
  std::ostringstream os;
  write_trace_csv(os, estimation_trace(*pipeline_, *day_));
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "t,V_true,V_hat,V_adj,V_tilde,rel_err1,rel_err2");
}

TEST_F(CigrePipeline, InfeasibleQuarticHoldsPreviousValue) {
  LocalTracker tr;
  tr.push(day_->sample(0));
  tr.push(day_->sample(1));
  tr.th = {1.0, 0.5, 0.5, true};
  tr.last_v_adj = 0.987;
  auto est = estimate_local_voltage(*pipeline_, tr, 0.0, 5.0, 5.0);
  EXPECT_FALSE(est.feasible);
  EXPECT_EQ(est.v_adj, 0.987);
  EXPECT_TRUE(std::isfinite(est.v_tilde));
}
