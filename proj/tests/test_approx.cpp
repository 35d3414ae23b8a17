#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "voltreg/approx/checkpoint.hpp"
#include "voltreg/approx/dense_net.hpp"
#include "voltreg/approx/poly.hpp"
#include "voltreg/approx/tiny_encoder.hpp"
#include "voltreg/approx/training.hpp"

using namespace voltreg;
using namespace voltreg::approx;

static_assert(ScalarModel<DenseNet>);
static_assert(ScalarModel<TinyEncoder>);

TEST(DenseNet, ZeroNetOutputsZero) {
  DenseNet net({3, 5, 1});
  const std::vector<double> x{0.3, -1.0, 2.0};
  EXPECT_EQ(net.predict(x), 0.0);
  EXPECT_EQ(grad_check(net, x), 0.0);
}

TEST(DenseNet, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int k = 0; k < 20; ++k) {
    DenseNet net({4, 7, 5, 1});
    net.initialize(rng);
    std::vector<double> x(4);
    for (auto& v : x) v = n(rng);
    EXPECT_LE(grad_check(net, x, 1e-5), 1e-4);
  }
}

TEST(DenseNet, GradientBufferSizeChecked) {
  DenseNet net({2, 1});
  std::vector<double> g(1), x{1.0, 2.0};
  EXPECT_THROW(net.backprop(x, 1.0, g), DimensionMismatch);
  std::vector<double> bad{1.0};
  EXPECT_THROW(net.predict(bad), DimensionMismatch);
}

TEST(TinyEncoder, SingleLayerGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int k = 0; k < 10; ++k) {
    TinyEncoder enc({.features = 5, .d_model = 4, .heads = 2, .mlp = 6, .layers = 1});
    enc.initialize(rng);
    std::vector<double> x(5);
    for (auto& v : x) v = n(rng);
    EXPECT_LE(grad_check(enc, x, 1e-5), 1e-3);
  }
}

TEST(TinyEncoder, DefaultShapeGradients) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  TinyEncoder enc(TinyEncoderConfig{});
  enc.initialize(rng);
  EXPECT_GT(enc.parameter_count(), 0u);
  std::vector<double> x(9);
  for (auto& v : x) v = n(rng);
  EXPECT_LE(grad_check(enc, x, 1e-5), 1e-3);
}

TEST(TinyEncoder, RejectsIndivisibleHeads) {
  EXPECT_THROW(TinyEncoder({.features = 3, .d_model = 5, .heads = 2}), DimensionMismatch);
}

TEST(Training, RecoversLinearSlope) {
  Dataset d;
  for (int i = 0; i <= 50; ++i) d.add({i / 50.0}, 2.0 * i / 50.0);
  DenseNet net({1, 1});
  std::mt19937_64 rng(4);
  net.initialize(rng);
  const auto res = train_regressor(net, d, {.lr = 0.05, .epochs = 400, .batch = 8, .seed = 1});
  EXPECT_NEAR(net.parameters()[0], 2.0, 1e-3);
  EXPECT_NEAR(net.parameters()[1], 0.0, 1e-3);
  for (std::size_t i = 1; i < res.loss_curve.size(); ++i)
    EXPECT_LE(res.loss_curve[i], res.loss_curve[i - 1]);
}

TEST(Training, ConstantTarget) {
  Dataset d;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 64; ++i) d.add({u(rng), u(rng)}, 0.7);
  DenseNet lin({2, 1});
  lin.initialize(rng);
  train_regressor(lin, d, {.lr = 0.05, .epochs = 400, .batch = 16, .seed = 2});
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_NEAR(lin.predict(d.x[i]), 0.7, 1e-4);
  // A tanh net gets close too, and its curve never rises.
  DenseNet net({2, 6, 1});
  net.initialize(rng);
  const auto res = train_regressor(net, d, {.lr = 0.01, .epochs = 300, .batch = 16, .seed = 2});
  EXPECT_LT(res.loss_curve.back(), 1e-3 * res.loss_curve.front());
  for (std::size_t i = 1; i < res.loss_curve.size(); ++i) EXPECT_LE(res.loss_curve[i], res.loss_curve[i - 1]);
}

TEST(Training, SameSeedSameParameters) {
  Dataset d;
  for (int i = 0; i < 40; ++i) d.add({std::sin(i * 0.3), std::cos(i * 0.2)}, std::sin(i * 0.1));
  auto run = [&] {
    std::mt19937_64 rng(6);
    TinyEncoder enc({.features = 2, .d_model = 4, .heads = 2, .mlp = 8, .layers = 1});
    enc.initialize(rng);
    train_regressor(enc, d, {.lr = 1e-2, .epochs = 5, .batch = 8, .seed = 3});
    return std::vector<double>(enc.parameters().begin(), enc.parameters().end());
  };
  EXPECT_EQ(run(), run());
}

TEST(Training, EmptyOrMismatchedDataRejected) {
  DenseNet net({2, 1});
  Dataset empty;
  EXPECT_THROW(train_regressor(net, empty), DimensionMismatch);
  Dataset wrong;
  wrong.add({1.0, 2.0, 3.0}, 1.0);
  EXPECT_THROW(train_regressor(net, wrong), DimensionMismatch);
}

TEST(Poly, ExponentsAreGraded) {
  const auto e = monomial_exponents(2, 2);
  ASSERT_EQ(e.size(), 6u);
  EXPECT_EQ(e[0], (std::vector<int>{0, 0}));
  EXPECT_EQ(e[1], (std::vector<int>{1, 0}));
  EXPECT_EQ(e[5], (std::vector<int>{0, 2}));
  EXPECT_EQ(monomial_exponents(4, 4).size(), 70u);  // C(8, 4)
}

TEST(Poly, ZeroVectorGivesConstantUnderIdentityScaling) {
  auto m = PolyModel::zeros(3, 2);
  for (std::size_t t = 0; t < m.coeffs.size(); ++t) m.coeffs[t] = 0.5 * static_cast<double>(t) + 1.0;
  const std::vector<double> z(3, 0.0);
  EXPECT_EQ(m.evaluate(z), m.constant());
}

TEST(Poly, RecoversQuadraticExactly) {
  Dataset d;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int i = 0; i < 60; ++i) {
    const double x1 = u(rng), x2 = u(rng);
    d.add({x1, x2}, x1 * x1 + 3.0);
  }
  const auto fit = fit_poly(d, 2, {.ridge = 0.0, .standardize = false});
  EXPECT_NEAR(fit.model.constant(), 3.0, 1e-9);
  EXPECT_NEAR(fit.model.coeffs[3], 1.0, 1e-9);  // x1^2
  for (std::size_t t : {1u, 2u, 4u, 5u}) EXPECT_NEAR(fit.model.coeffs[t], 0.0, 1e-9);
  EXPECT_LE(fit.rmse, 1e-9);
}

TEST(Poly, DegreeFourFourInputsFitsLinearPlantOnHoldout) {
  Dataset train, hold;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto plant = [](const std::vector<double>& x) { return 0.98 - 0.01 * (x[0] + x[1]) + 0.3 * x[2]; };
  for (int i = 0; i < 400; ++i) {
    std::vector<double> x{u(rng), u(rng), u(rng), u(rng)};
    ((i < 300) ? train : hold).add(x, plant(x));
  }
  const auto fit = fit_poly(train, 4);
  EXPECT_LE(rmse(fit.model, hold), 1e-6);
}

TEST(Poly, RidgeSolutionIsGlobalMinimum) {
  Dataset d;
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 30; ++i) {
    const double a = u(rng), b = u(rng);
    d.add({a, b}, std::sin(3 * a) + b * b * b + 0.1 * u(rng));
  }
  const double ridge = 1e-3;
  const auto fit = fit_poly(d, 3, {.ridge = ridge, .standardize = true});
  const double best = ridge_objective(fit.model, d, ridge);
  for (std::size_t t = 0; t < fit.model.coeffs.size(); ++t) {
    for (double s : {-1e-3, 1e-3}) {
      auto m = fit.model;
      m.coeffs[t] += s;
      EXPECT_GE(ridge_objective(m, d, ridge), best);
    }
  }
}

TEST(Poly, RankDeficientDesignStaysFinite) {
  Dataset d;
  for (int i = 0; i < 20; ++i) d.add({0.1 * i, 0.1 * i}, 1.0 + 0.2 * i);  // collinear inputs
  const auto fit = fit_poly(d, 2);
  EXPECT_TRUE(fit.rank_deficient);
  for (double c : fit.model.coeffs) EXPECT_TRUE(std::isfinite(c));
  EXPECT_LE(fit.rmse, 1e-6);
}

TEST(Poly, GradientMatchesFiniteDifferences) {
  Dataset d;
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 80; ++i) {
    const double a = u(rng), b = u(rng), c = u(rng);
    d.add({a, b, c}, a * b + c * c * c - 2 * a);
  }
  const auto m = fit_poly(d, 3).model;
  const std::vector<double> x{0.2, -0.4, 0.7};
  std::vector<double> g(3);
  m.gradient(x, g);
  for (std::size_t j = 0; j < 3; ++j) {
    auto xp = x, xm = x;
    xp[j] += 1e-6;
    xm[j] -= 1e-6;
    EXPECT_NEAR(g[j], (m.evaluate(xp) - m.evaluate(xm)) / 2e-6, 1e-6);
  }
}

TEST(Checkpoint, RoundTrip) {
  std::mt19937_64 rng(13);
  DenseNet net({3, 4, 1});
  net.initialize(rng);
  Checkpoint ck{"dense", net.sizes(), {{"activation", "tanh"}},
                std::vector<double>(net.parameters().begin(), net.parameters().end())};
  std::ostringstream out;
  write_checkpoint(out, ck);
  std::istringstream in(out.str());
  const auto back = read_checkpoint(in);
  EXPECT_EQ(back.kind, "dense");
  EXPECT_EQ(back.shape, net.sizes());
  ASSERT_NE(back.find_meta("activation"), nullptr);
  DenseNet copy({3, 4, 1});
  restore_parameters(copy, back);
  const std::vector<double> x{0.1, 0.2, 0.3};
  EXPECT_EQ(copy.predict(x), net.predict(x));
}

TEST(Checkpoint, TruncatedFileIsSchemaError) {
  std::istringstream in("voltreg-checkpoint,1\nkind,dense\nshape,2,1\ncount,3\n0.1\n");
  EXPECT_THROW(read_checkpoint(in), SchemaError);
}
