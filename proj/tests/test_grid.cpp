#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "support.hpp"
#include "voltreg/grid/power_flow.hpp"
#include "voltreg/grid/topology_io.hpp"

using namespace voltreg;
using namespace voltreg::grid;

namespace {

double max_dv(const PowerFlowSolution& a, const PowerFlowSolution& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) d = std::max(d, std::abs(a.v[i] - b.v[i]));
  return d;
}

}  // namespace

TEST(Network, RejectsCycle) {
  std::vector<Node> nodes{{"A", NodeKind::slack}, {"B", NodeKind::load}, {"C", NodeKind::load}};
  EXPECT_THROW(Network::build(nodes, {{"A", "B", 0.1, 0.1}, {"B", "C", 0.1, 0.1}, {"C", "A", 0.1, 0.1}}),
               InvalidTopology);
  // right edge count but disconnected
  std::vector<Node> four{{"A", NodeKind::slack}, {"B", NodeKind::load}, {"C", NodeKind::load},
                         {"D", NodeKind::load}};
  EXPECT_THROW(Network::build(four, {{"A", "B", 0.1, 0.1}, {"C", "D", 0.1, 0.1}, {"D", "C", 0.1, 0.1}}),
               InvalidTopology);
}

TEST(Network, RejectsBadParameters) {
  std::vector<Node> nodes{{"A", NodeKind::slack}, {"B", NodeKind::load}};
  EXPECT_THROW(Network::build(nodes, {{"A", "B", -0.1, 0.1}}), InvalidTopology);
  EXPECT_THROW(Network::build(nodes, {{"A", "B", 0.0, 0.0}}), InvalidTopology);
  EXPECT_THROW(Network::build(nodes, {{"A", "X", 0.1, 0.1}}), InvalidTopology);
  EXPECT_THROW(Network::build({{"A", NodeKind::slack}, {"B", NodeKind::slack}}, {{"A", "B", 0.1, 0.1}}),
               InvalidTopology);
  EXPECT_THROW(Network::build(nodes, {{"A", "B", 0.1, 0.1}}, {0.0, 1e5}), InvalidTopology);
}

TEST(Topology, ParsesFixture) {
  const auto net = testsupport::cigre();
  EXPECT_EQ(net.node_count(), 19u);
  EXPECT_EQ(net.lines().size(), 18u);
  EXPECT_EQ(net.nodes()[net.slack()].id, "R0");
  EXPECT_DOUBLE_EQ(net.slack_voltage(), 1.0);
}

TEST(Topology, SchemaErrorsCarryLineNumbers) {
  std::istringstream bad_version("version,2\n");
  EXPECT_THROW(parse_topology(bad_version), SchemaError);
  std::istringstream bad_number("version,1\nnode,A,slack\nnode,B,load\nline,A,B,abc,0.1\n");
  try {
    parse_topology(bad_number);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.line(), 4u);
  }
}

TEST(PowerFlow, NoLoadIsFlat) {
  const auto net = testsupport::cigre();
  std::vector<NodeInjection> inj(net.node_count());
  for (const auto& sol : {solve_sweep(net, inj), solve_newton(net, inj)}) {
    ASSERT_TRUE(sol.converged);
    for (double v : sol.v) EXPECT_DOUBLE_EQ(v, 1.0);
    for (double p : sol.p_flow) EXPECT_DOUBLE_EQ(p, 0.0);
  }
}

TEST(PowerFlow, TwoBusClosedForm) {
  // R = 0.1 p.u. on a 1.6 ohm base, 0.1 p.u. of load, X = 0. With the
  // current in phase with V2: V1 = V2 + R P / V2.
  const double r_pu = 0.1, p_pu = 0.1;
  const double expected = (1.0 + std::sqrt(1.0 - 4.0 * r_pu * p_pu)) / 2.0;
  const auto net = testsupport::two_bus(r_pu * 1.6, 0.0);
  std::vector<NodeInjection> inj(2);
  inj[1].p_demand_w = p_pu * 100e3;
  const auto sweep = solve_sweep(net, inj, {.tolerance = 1e-12});
  const auto newton = solve_newton(net, inj);
  ASSERT_TRUE(sweep.converged);
  ASSERT_TRUE(newton.converged);
  EXPECT_NEAR(sweep.v[1], expected, 1e-12);
  EXPECT_NEAR(newton.v[1], expected, 1e-12);
  EXPECT_NEAR(expected, 0.989898, 1e-6);
  // Default tolerance bounds the error by the mismatch tolerance.
  EXPECT_NEAR(solve_sweep(net, inj).v[1], expected, 1e-8);
}

TEST(PowerFlow, SweepMatchesNewtonOnRandomInjections) {
  const auto net = testsupport::cigre();
  std::mt19937_64 rng(7);
  for (int k = 0; k < 200; ++k) {
    const auto inj = testsupport::random_injections(net, rng);
    const auto a = solve_sweep(net, inj);
    const auto b = solve_newton(net, inj);
    ASSERT_TRUE(a.converged);
    ASSERT_TRUE(b.converged);
    EXPECT_LE(a.max_mismatch, 1e-8);
    EXPECT_EQ(a.v[net.slack()], net.slack_voltage());
    EXPECT_LE(max_dv(a, b), 1e-6);
    const auto res = branch_flow_residuals(net, inj, a);
    EXPECT_LE(res.max_balance, 1e-8);
    EXPECT_LE(res.max_voltage_drop, 1e-8);
  }
}

TEST(PowerFlow, NewtonFlowsSatisfyBranchEquations) {
  const auto net = testsupport::cigre();
  std::mt19937_64 rng(11);
  const auto inj = testsupport::random_injections(net, rng);
  const auto b = solve_newton(net, inj);
  ASSERT_TRUE(b.converged);
  const auto res = branch_flow_residuals(net, inj, b);
  EXPECT_LE(res.max_balance, 1e-8);
  EXPECT_LE(res.max_voltage_drop, 1e-8);
}

TEST(PowerFlow, LoadIncreaseNeverRaisesLeafVoltage) {
  const auto net = testsupport::cigre();
  std::mt19937_64 rng(3);
  const auto leaf = net.index_of("R15");
  for (int k = 0; k < 50; ++k) {
    auto inj = testsupport::random_injections(net, rng);
    const double before = solve_sweep(net, inj).v[leaf];
    inj[leaf].p_demand_w += 5e3;
    const double after = solve_sweep(net, inj).v[leaf];
    EXPECT_LE(after, before + 1e-12);
  }
}

TEST(PowerFlow, CollapseIsReportedNotThrown) {
  const auto net = testsupport::two_bus(1.6, 0.0);
  std::vector<NodeInjection> inj(2);
  inj[1].p_demand_w = 40e3;  // beyond the 0.25 p.u. loadability of R = 1 p.u.
  const auto sol = solve_sweep(net, inj);
  EXPECT_FALSE(sol.converged);
}

TEST(PowerFlow, InjectionCountChecked) {
  const auto net = testsupport::cigre();
  std::vector<NodeInjection> inj(3);
  EXPECT_THROW(solve_sweep(net, inj), DimensionMismatch);
}

TEST(Limits, FlatProfileHasNoViolations) {
  PowerFlowSolution sol;
  sol.v.assign(5, 1.0);
  sol.converged = true;
  EXPECT_TRUE(check_limits(sol, 0.95, 1.05).empty());
}

TEST(Limits, SignedExcess) {
  PowerFlowSolution sol;
  sol.v = {1.0, 0.94, 1.07, 0.95};
  sol.converged = true;
  const auto v = check_limits(sol, 0.95, 1.05);
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v[0].node, 1u);
  EXPECT_NEAR(v[0].excess, -0.01, 1e-15);
  EXPECT_EQ(v[1].node, 2u);
  EXPECT_NEAR(v[1].excess, 0.02, 1e-15);
}
