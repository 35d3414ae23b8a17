#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "voltreg/approx/dataset.hpp"
#include "voltreg/errors.hpp"

namespace voltreg::approx {

// All exponent vectors of total degree <= `degree` in `dim` variables, graded
// (constant first, then degree 1, ...).
inline std::vector<std::vector<int>> monomial_exponents(std::size_t dim, int degree) {
  std::vector<std::vector<int>> out;
  std::vector<int> e(dim, 0);
  for (int total = 0; total <= degree; ++total) {
    // Enumerate compositions of `total` into `dim` parts, lexicographically.
    auto rec = [&](auto&& self, std::size_t i, int left) -> void {
      if (i + 1 == dim || dim == 0) {
        if (dim) e[i] = left;
        if (dim || left == 0) out.push_back(e);
        return;
      }
      for (int k = left; k >= 0; --k) {
        e[i] = k;
        self(self, i + 1, left - k);
      }
    };
    rec(rec, 0, total);
  }
  return out;
}

// Polynomial of total degree `degree` over inputs normalised as
// z = (x - offset) / scale. With the identity normalisation the model at the
// zero vector equals the constant coefficient.
struct PolyModel {
  std::size_t dim = 0;
  int degree = 0;
  std::vector<std::vector<int>> exponents;
  std::vector<double> coeffs;
  std::vector<double> offset;
  std::vector<double> scale;

  static PolyModel zeros(std::size_t dim, int degree) {
    PolyModel m;
    m.dim = dim;
    m.degree = degree;
    m.exponents = monomial_exponents(dim, degree);
    m.coeffs.assign(m.exponents.size(), 0.0);
    m.offset.assign(dim, 0.0);
    m.scale.assign(dim, 1.0);
    return m;
  }

  std::size_t term_count() const { return exponents.size(); }
  double constant() const { return coeffs.empty() ? 0.0 : coeffs.front(); }

  // Coefficient of the monomial with exponents `e` (in normalised inputs).
  double& coefficient(const std::vector<int>& e) {
    auto it = std::find(exponents.begin(), exponents.end(), e);
    if (it == exponents.end()) throw DimensionMismatch("monomial outside the basis");
    return coeffs[static_cast<std::size_t>(it - exponents.begin())];
  }

  // Monomial values at x, written into `phi` (size term_count()).
  void features(std::span<const double> x, std::span<double> phi) const {
    if (x.size() != dim) throw DimensionMismatch("polynomial input has wrong dimension");
    thread_local std::vector<double> powers;
    powers.assign(dim * static_cast<std::size_t>(degree + 1), 1.0);
    for (std::size_t i = 0; i < dim; ++i) {
      const double z = (x[i] - offset[i]) / scale[i];
      for (int k = 1; k <= degree; ++k) powers[i * (degree + 1) + k] = powers[i * (degree + 1) + k - 1] * z;
    }
    for (std::size_t t = 0; t < exponents.size(); ++t) {
      double v = 1.0;
      for (std::size_t i = 0; i < dim; ++i)
        if (exponents[t][i]) v *= powers[i * (degree + 1) + exponents[t][i]];
      phi[t] = v;
    }
  }

  double evaluate(std::span<const double> x) const {
    thread_local std::vector<double> phi;
    phi.resize(term_count());
    features(x, phi);
    double s = 0.0;
    for (std::size_t t = 0; t < phi.size(); ++t) s += coeffs[t] * phi[t];
    return s;
  }

  // d(evaluate)/dx written into `grad` (size dim).
  void gradient(std::span<const double> x, std::span<double> grad) const {
    if (x.size() != dim || grad.size() != dim) throw DimensionMismatch("gradient size mismatch");
    thread_local std::vector<double> powers;
    powers.assign(dim * static_cast<std::size_t>(degree + 1), 1.0);
    for (std::size_t i = 0; i < dim; ++i) {
      const double z = (x[i] - offset[i]) / scale[i];
      for (int k = 1; k <= degree; ++k) powers[i * (degree + 1) + k] = powers[i * (degree + 1) + k - 1] * z;
    }
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t t = 0; t < exponents.size(); ++t) {
      if (coeffs[t] == 0.0) continue;
      for (std::size_t j = 0; j < dim; ++j) {
        const int ej = exponents[t][j];
        if (ej == 0) continue;
        double v = coeffs[t] * ej * powers[j * (degree + 1) + ej - 1];
        for (std::size_t i = 0; i < dim; ++i)
          if (i != j && exponents[t][i]) v *= powers[i * (degree + 1) + exponents[t][i]];
        grad[j] += v / scale[j];
      }
    }
  }
};

struct PolyFitOptions {
  double ridge = 1e-8;       // penalty on every non-constant coefficient
  bool standardize = true;   // fit on z-scored inputs
};

struct PolyFit {
  PolyModel model;
  double rmse = 0.0;
  bool rank_deficient = false;
};

// Sum of squared residuals plus the ridge penalty; the quantity fit_poly
// minimises.
inline double ridge_objective(const PolyModel& m, const Dataset& data, double ridge) {
  double obj = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double r = m.evaluate(data.x[i]) - data.y[i];
    obj += r * r;
  }
  for (std::size_t t = 1; t < m.coeffs.size(); ++t) obj += ridge * m.coeffs[t] * m.coeffs[t];
  return obj;
}

inline PolyFit fit_poly(const Dataset& data, int degree, PolyFitOptions opt = {}) {
  if (data.empty()) throw DimensionMismatch("cannot fit a polynomial to an empty dataset");
  const std::size_t dim = data.input_size();
  data.validate(dim);
  if (degree < 0) throw DimensionMismatch("polynomial degree must be non-negative");

  PolyFit fit;
  fit.model = PolyModel::zeros(dim, degree);
  auto& m = fit.model;
  if (opt.standardize) {
    for (std::size_t j = 0; j < dim; ++j) {
      double mean = 0.0;
      for (const auto& row : data.x) mean += row[j];
      mean /= static_cast<double>(data.size());
      double var = 0.0;
      for (const auto& row : data.x) var += (row[j] - mean) * (row[j] - mean);
      const double sd = std::sqrt(var / static_cast<double>(data.size()));
      m.offset[j] = mean;
      m.scale[j] = sd > 1e-12 * std::max(1.0, std::abs(mean)) ? sd : 1.0;
    }
  }

  const std::size_t n = data.size();
  const std::size_t p = m.term_count();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n + p - 1),
                                            static_cast<Eigen::Index>(p));
  Eigen::VectorXd b = Eigen::VectorXd::Zero(a.rows());
  std::vector<double> phi(p);
  for (std::size_t i = 0; i < n; ++i) {
    m.features(data.x[i], phi);
    for (std::size_t t = 0; t < p; ++t) a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = phi[t];
    b(static_cast<Eigen::Index>(i)) = data.y[i];
  }
  const double root = std::sqrt(opt.ridge);
  for (std::size_t t = 1; t < p; ++t)
    a(static_cast<Eigen::Index>(n + t - 1), static_cast<Eigen::Index>(t)) = root;

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a.topRows(static_cast<Eigen::Index>(n)));
  fit.rank_deficient = qr.rank() < static_cast<Eigen::Index>(p);

  // Ridge rows keep the augmented system full rank whenever ridge > 0.
  Eigen::VectorXd c;
  if (opt.ridge > 0.0 || !fit.rank_deficient)
    c = a.colPivHouseholderQr().solve(b);
  else
    c = qr.solve(b.head(static_cast<Eigen::Index>(n)));
  for (std::size_t t = 0; t < p; ++t) m.coeffs[t] = c(static_cast<Eigen::Index>(t));

  double sse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = m.evaluate(data.x[i]) - data.y[i];
    sse += r * r;
  }
  fit.rmse = std::sqrt(sse / static_cast<double>(n));
  return fit;
}

inline double rmse(const PolyModel& m, const Dataset& data) {
  if (data.empty()) return 0.0;
  double sse = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double r = m.evaluate(data.x[i]) - data.y[i];
    sse += r * r;
  }
  return std::sqrt(sse / static_cast<double>(data.size()));
}

}  // namespace voltreg::approx
