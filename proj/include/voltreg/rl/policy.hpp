#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "voltreg/approx/dense_net.hpp"
#include "voltreg/errors.hpp"

namespace voltreg::rl {

struct ActionBounds {
  double lo = -1.0;
  double hi = 1.0;
  double mid() const { return 0.5 * (lo + hi); }
  double half() const { return 0.5 * (hi - lo); }
  double squash(double u) const { return mid() + half() * std::tanh(u); }
};

// Fixed affine map applied to raw states before either network sees them.
struct ObsNormalizer {
  std::vector<double> shift, scale;

  bool empty() const { return shift.empty(); }
  std::vector<double> apply(std::span<const double> s) const {
    std::vector<double> z(s.begin(), s.end());
    if (empty()) return z;
    if (s.size() != shift.size()) throw DimensionMismatch("state size differs from normaliser");
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = (z[i] - shift[i]) / scale[i];
    return z;
  }
  static ObsNormalizer fit(const std::vector<std::vector<double>>& states) {
    ObsNormalizer n;
    if (states.empty()) return n;
    const std::size_t d = states.front().size();
    n.shift.assign(d, 0.0);
    n.scale.assign(d, 0.0);
    for (const auto& s : states)
      for (std::size_t i = 0; i < d; ++i) n.shift[i] += s[i];
    for (auto& m : n.shift) m /= static_cast<double>(states.size());
    for (const auto& s : states)
      for (std::size_t i = 0; i < d; ++i) n.scale[i] += (s[i] - n.shift[i]) * (s[i] - n.shift[i]);
    for (auto& v : n.scale) {
      v = std::sqrt(v / static_cast<double>(states.size()));
      if (!(v > 1e-8)) v = 1.0;
    }
    return n;
  }
};

// Gaussian over an unbounded pre-action u, mapped to watts by tanh. The
// standard deviation is a learned state-independent parameter. Ratios of
// probabilities are taken on u, where the squashing Jacobian cancels.
struct GaussianPolicy {
  approx::DenseNet mean;
  double log_std = -0.5;
  ActionBounds bounds;
  ObsNormalizer norm;

  static constexpr double kLogStdMin = -5.0;
  static constexpr double kLogStdMax = 1.0;

  struct Sample {
    double u = 0.0;
    double action = 0.0;
    double logp = 0.0;
  };

  double mu(std::span<const double> s) const { return mean.predict(norm.apply(s)); }

  static double log_prob(double u, double mu, double log_std) {
    const double z = (u - mu) * std::exp(-log_std);
    return -0.5 * z * z - log_std - 0.5 * std::log(2.0 * std::numbers::pi);
  }

  Sample sample(std::span<const double> s, std::mt19937_64& rng) const {
    const double m = mu(s);
    std::normal_distribution<double> n(0.0, 1.0);
    const double u = m + std::exp(log_std) * n(rng);
    return {u, bounds.squash(u), log_prob(u, m, log_std)};
  }

  // Deterministic action used when the policy is deployed.
  double act(std::span<const double> s) const { return bounds.squash(mu(s)); }

  void clamp_log_std() { log_std = std::clamp(log_std, kLogStdMin, kLogStdMax); }
};

}  // namespace voltreg::rl
