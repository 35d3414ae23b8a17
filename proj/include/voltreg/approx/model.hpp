#pragma once

#include <concepts>
#include <cstddef>
#include <span>

namespace voltreg::approx {

// A scalar-output model with flat parameter storage and exact reverse-mode
// gradients. backprop() adds upstream * d(output)/d(params) into `grad` and
// returns the output.
template <class M>
concept ScalarModel = requires(M& m, const M& cm, std::span<const double> x, std::span<double> g) {
  { cm.input_size() } -> std::convertible_to<std::size_t>;
  { cm.parameter_count() } -> std::convertible_to<std::size_t>;
  { m.parameters() } -> std::same_as<std::span<double>>;
  { cm.parameters() } -> std::same_as<std::span<const double>>;
  { cm.predict(x) } -> std::convertible_to<double>;
  { cm.backprop(x, 1.0, g) } -> std::convertible_to<double>;
};

}  // namespace voltreg::approx
