#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "voltreg/approx/dataset.hpp"
#include "voltreg/approx/poly.hpp"
#include "voltreg/errors.hpp"

namespace voltreg::coord {

// One logged step of a neighbourhood: member actions (watt), the reference
// actions the members' voltage estimates refer to, the estimates and the
// voltages that were then realised. A reference of zero means the estimate
// assumes idle storage.
struct NeighborhoodSample {
  std::vector<double> a_w;
  std::vector<double> a_ref_w;  // empty: all zero
  std::vector<double> v_est;
  std::vector<double> v_true;
};

// Voltage of every member as a polynomial in the scaled member action
// increments and estimates:
//   input = [(a_1 - r_1)/P_1, ..., (a_k - r_k)/P_k, V_1, ..., V_k].
struct SensitivitySurrogate {
  std::vector<double> p_scale_w;  // P per member
  std::vector<approx::PolyModel> models;
  double train_rmse = 0.0;
  double val_rmse = 0.0;

  std::size_t members() const { return p_scale_w.size(); }

  std::vector<double> input(std::span<const double> a_w, std::span<const double> v_est,
                            std::span<const double> a_ref_w = {}) const {
    if (a_w.size() != members() || v_est.size() != members() || (!a_ref_w.empty() && a_ref_w.size() != members()))
      throw DimensionMismatch("surrogate input does not match the neighbourhood size");
    std::vector<double> x(2 * members());
    for (std::size_t j = 0; j < members(); ++j) {
      x[j] = (a_w[j] - (a_ref_w.empty() ? 0.0 : a_ref_w[j])) / p_scale_w[j];
      x[members() + j] = v_est[j];
    }
    return x;
  }

  double predict(std::size_t k, std::span<const double> a_w, std::span<const double> v_est,
                 std::span<const double> a_ref_w = {}) const {
    return models.at(k).evaluate(input(a_w, v_est, a_ref_w));
  }

  // d V_k / d a_j in p.u. per watt.
  std::vector<double> action_gradient(std::size_t k, std::span<const double> a_w, std::span<const double> v_est,
                                      std::span<const double> a_ref_w = {}) const {
    const auto x = input(a_w, v_est, a_ref_w);
    std::vector<double> g(x.size());
    models.at(k).gradient(x, g);
    std::vector<double> out(members());
    for (std::size_t j = 0; j < members(); ++j) out[j] = g[j] / p_scale_w[j];
    return out;
  }
};

struct SurrogateOptions {
  int degree = 4;
  double ridge = 1e-8;
  double train_fraction = 0.8;
};

// Least-squares polynomial per member on a chronological split of the logs.
inline SensitivitySurrogate fit_sensitivity(const std::vector<NeighborhoodSample>& logs,
                                            std::vector<double> p_scale_w, const SurrogateOptions& opt = {}) {
  const std::size_t k = p_scale_w.size();
  if (k == 0) throw ConfigError("neighbourhood has no members");
  for (double p : p_scale_w)
    if (!(p > 0.0)) throw ConfigError("surrogate power scale must be positive");
  if (logs.size() < 2) throw UnderdeterminedSegment("too few logged steps to fit the surrogate");
  SensitivitySurrogate s;
  s.p_scale_w = std::move(p_scale_w);
  std::vector<approx::Dataset> data(k);
  for (const auto& row : logs) {
    if (row.a_w.size() != k || row.v_est.size() != k || row.v_true.size() != k)
      throw DimensionMismatch("logged step does not match the neighbourhood size");
    const auto x = s.input(row.a_w, row.v_est, row.a_ref_w);
    for (std::size_t m = 0; m < k; ++m) data[m].add(x, row.v_true[m]);
  }
  double tr_sq = 0.0, va_sq = 0.0;
  std::size_t tr_n = 0, va_n = 0;
  for (std::size_t m = 0; m < k; ++m) {
    auto [train, val] = data[m].split(opt.train_fraction);
    auto fit = approx::fit_poly(train, opt.degree, {.ridge = opt.ridge, .standardize = true});
    s.models.push_back(fit.model);
    for (std::size_t i = 0; i < train.size(); ++i) {
      const double r = s.models.back().evaluate(train.x[i]) - train.y[i];
      tr_sq += r * r;
    }
    for (std::size_t i = 0; i < val.size(); ++i) {
      const double r = s.models.back().evaluate(val.x[i]) - val.y[i];
      va_sq += r * r;
    }
    tr_n += train.size();
    va_n += val.size();
  }
  s.train_rmse = tr_n ? std::sqrt(tr_sq / static_cast<double>(tr_n)) : 0.0;
  s.val_rmse = va_n ? std::sqrt(va_sq / static_cast<double>(va_n)) : 0.0;
  return s;
}

}  // namespace voltreg::coord
