#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "voltreg/errors.hpp"

namespace voltreg::assets {

// Battery storage at one node. Power is charging-positive (watt); energy in
// watt-hours; dt is the control interval in hours.
struct EssSpec {
  std::string node;
  double p_max_w = 60e3;
  double p_min_w = -60e3;
  double e_rated_wh = 3e6;
  double soc_min = 0.1;
  double soc_max = 0.9;
  double pf = 1.0;
  double dt_h = 0.25;

  void validate() const {
    if (!(0.0 <= soc_min && soc_min < soc_max && soc_max <= 1.0))
      throw ConfigError("ESS at " + node + ": need 0 <= soc_min < soc_max <= 1");
    if (!(p_min_w <= 0.0 && 0.0 <= p_max_w))
      throw ConfigError("ESS at " + node + ": need p_min <= 0 <= p_max");
    if (!(e_rated_wh > 0.0)) throw ConfigError("ESS at " + node + ": rated energy must be positive");
    if (!(dt_h > 0.0)) throw ConfigError("ESS at " + node + ": dt must be positive");
    if (!(pf > 0.0 && pf <= 1.0)) throw ConfigError("ESS at " + node + ": pf must lie in (0, 1]");
  }

  // Same device with rated energy derated by `factor`.
  EssSpec with_energy_scale(double factor) const {
    EssSpec s = *this;
    s.e_rated_wh *= factor;
    return s;
  }
};

struct EssState {
  double soc = 0.5;
};

// Power window [lo, hi] (watt) admissible from `state` in one step: the power
// limits intersected with what keeps SOC inside its bounds.
struct PowerWindow {
  double lo = 0.0;
  double hi = 0.0;
};

inline PowerWindow admissible_power(const EssSpec& spec, const EssState& state) {
  const double per_step = spec.e_rated_wh / spec.dt_h;  // watt per unit SOC
  const double charge_room = std::max(0.0, (spec.soc_max - state.soc) * per_step);
  const double discharge_room = std::max(0.0, (state.soc - spec.soc_min) * per_step);
  return {std::max(spec.p_min_w, -discharge_room), std::min(spec.p_max_w, charge_room)};
}

struct SocStep {
  EssState state;
  double applied_w = 0.0;
};

// Advances SOC by one interval with 100 % efficiency. Requests outside the
// admissible window are clipped, never rejected.
inline SocStep step_soc(const EssSpec& spec, const EssState& state, double p_request_w) {
  if (std::isnan(p_request_w)) p_request_w = 0.0;
  const auto window = admissible_power(spec, state);
  const double applied = std::clamp(p_request_w, window.lo, window.hi);
  double soc = state.soc + applied * spec.dt_h / spec.e_rated_wh;
  soc = std::clamp(soc, spec.soc_min, spec.soc_max);
  return {{soc}, applied};
}

}  // namespace voltreg::assets
