#pragma once

#include <concepts>
#include <cstddef>
#include <vector>

#include "voltreg/rl/policy.hpp"

namespace voltreg::rl {

struct StepResult {
  std::vector<double> state;  // state for the next decision
  double reward = 0.0;
  bool done = false;          // end of the episode (one profile day)
  double applied_w = 0.0;     // storage power after SOC clipping
  double voltage = 0.0;       // voltage the reward was computed from
  bool converged = true;
};

// Contract shared by the central and local environments.
//   reset():        restart the current day with SOC back at its initial value
//   next_episode(): move to the next day, keeping SOC
template <class E>
concept Environment = requires(E e, const E ce, double a) {
  { ce.state_dim() } -> std::convertible_to<std::size_t>;
  { ce.bounds() } -> std::convertible_to<ActionBounds>;
  { e.reset() } -> std::convertible_to<std::vector<double>>;
  { e.next_episode() } -> std::convertible_to<std::vector<double>>;
  { e.step(a) } -> std::convertible_to<StepResult>;
};

}  // namespace voltreg::rl
