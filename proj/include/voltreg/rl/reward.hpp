#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>

#include "voltreg/errors.hpp"

namespace voltreg::rl {

struct RewardConfig {
  double v_min = 0.95;
  double v_max = 1.05;
  double w_p = 1.0;
  double w_lambda = 1.0;
  double lambda = 100.0;
  double relax_lo = 0.02;
  double relax_hi = 0.02;
  double cost = 1.0;            // C, constant over time
  double power_unit_w = 60e3;   // storage power is expressed in this unit

  void validate() const {
    if (!(v_min < v_max)) throw ConfigError("voltage band is empty");
    if (relax_lo < 0.0 || relax_hi < 0.0) throw ConfigError("relaxation factors must be non-negative");
    if (!(v_max - relax_hi > v_min + relax_lo)) throw ConfigError("relaxed voltage band is empty");
    if (!(power_unit_w > 0.0)) throw ConfigError("power unit must be positive");
  }
};

// System reward over all node voltages and all storage powers (watt):
//   -C sum|P| + sum_m min{0, (V_max - V_min)/2 - |V_m - V_max|}.
inline double reward_central(std::span<const double> v, std::span<const double> p_w, const RewardConfig& c) {
  double power = 0.0;
  for (double p : p_w) power += std::abs(p);
  double volt = 0.0;
  const double half = 0.5 * (c.v_max - c.v_min);
  for (double vm : v) volt += std::min(0.0, half - std::abs(vm - c.v_max));
  return -c.cost * power / c.power_unit_w + volt;
}

inline bool outside_relaxed_band(double v, const RewardConfig& c) {
  return v > c.v_max - c.relax_hi || v < c.v_min + c.relax_lo;
}

// Step reward on one node's voltage. The penalty branch wins wherever the
// two printed cases overlap.
inline double reward_local(double v, double p_abs_w, const RewardConfig& c) {
  const double p = std::abs(p_abs_w) / c.power_unit_w;
  if (!std::isfinite(v) || outside_relaxed_band(v, c)) return -c.w_p * c.cost * p - c.w_lambda * c.lambda;
  return -c.w_p * p;
}

}  // namespace voltreg::rl
