#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "voltreg/approx/dataset.hpp"

namespace voltreg::approx {

// Per-column z-scoring of inputs and of the scalar target.
struct Standardizer {
  std::vector<double> x_mean, x_scale;
  double y_mean = 0.0, y_scale = 1.0;

  static Standardizer fit(const Dataset& data) {
    Standardizer s;
    const std::size_t d = data.input_size(), n = data.size();
    s.x_mean.assign(d, 0.0);
    s.x_scale.assign(d, 1.0);
    if (n == 0) return s;
    auto sd = [](double var) { return var > 1e-24 ? std::sqrt(var) : 1.0; };
    for (std::size_t j = 0; j < d; ++j) {
      double m = 0.0, v = 0.0;
      for (const auto& r : data.x) m += r[j];
      m /= static_cast<double>(n);
      for (const auto& r : data.x) v += (r[j] - m) * (r[j] - m);
      s.x_mean[j] = m;
      s.x_scale[j] = sd(v / static_cast<double>(n));
    }
    double m = 0.0, v = 0.0;
    for (double y : data.y) m += y;
    m /= static_cast<double>(n);
    for (double y : data.y) v += (y - m) * (y - m);
    s.y_mean = m;
    s.y_scale = sd(v / static_cast<double>(n));
    return s;
  }

  void transform_x(std::span<const double> x, std::span<double> out) const {
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - x_mean[j]) / x_scale[j];
  }
  double transform_y(double y) const { return (y - y_mean) / y_scale; }
  double inverse_y(double z) const { return y_mean + y_scale * z; }

  Dataset transform(const Dataset& data) const {
    Dataset out;
    std::vector<double> row;
    for (std::size_t i = 0; i < data.size(); ++i) {
      row.resize(data.x[i].size());
      transform_x(data.x[i], row);
      out.add(row, transform_y(data.y[i]));
    }
    return out;
  }
};

}  // namespace voltreg::approx
