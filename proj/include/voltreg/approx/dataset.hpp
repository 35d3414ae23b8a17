#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "voltreg/errors.hpp"

namespace voltreg::approx {

// Rows of (input vector, scalar target).
struct Dataset {
  std::vector<std::vector<double>> x;
  std::vector<double> y;

  std::size_t size() const { return y.size(); }
  bool empty() const { return y.empty(); }
  std::size_t input_size() const { return x.empty() ? 0 : x.front().size(); }

  void add(std::vector<double> row, double target) {
    x.push_back(std::move(row));
    y.push_back(target);
  }

  void validate(std::size_t expected_dim) const {
    if (x.size() != y.size()) throw DimensionMismatch("dataset has mismatched x/y lengths");
    for (const auto& row : x)
      if (row.size() != expected_dim)
        throw DimensionMismatch("dataset row has " + std::to_string(row.size()) +
                                " features, model expects " + std::to_string(expected_dim));
  }

  // Deterministic head/tail split: first `fraction` of rows vs the rest.
  std::pair<Dataset, Dataset> split(double fraction) const {
    const auto cut = static_cast<std::size_t>(fraction * static_cast<double>(size()));
    Dataset a, b;
    for (std::size_t i = 0; i < size(); ++i) (i < cut ? a : b).add(x[i], y[i]);
    return {std::move(a), std::move(b)};
  }
};

}  // namespace voltreg::approx
