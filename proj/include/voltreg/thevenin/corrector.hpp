#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "voltreg/approx/poly.hpp"
#include "voltreg/errors.hpp"

namespace voltreg::thevenin {

struct CorrectorOptions {
  double v_min_volt = 390.0;
  double v_max_volt = 400.0;
  double v_base_volt = 400.0;
  int order = 3;
  double ridge = 1e-10;
  // Final clamp on the corrected value (p.u.); disabled when lo >= hi.
  double clamp_lo = 0.9;
  double clamp_hi = 1.05;
};

// Three polynomials over [0, v_min), [v_min, v_max], (v_max, inf) of the raw
// estimate. Inputs and outputs are per unit. A segment's input is clamped to
// the range it was fitted on so that far-out raw values cannot be
// extrapolated.
struct PiecewiseCorrector {
  double v_min = 0.975;
  double v_max = 1.0;
  struct Segment {
    bool identity = true;
    approx::PolyModel poly;
    double lo = 0.0, hi = 0.0;
  };
  std::array<Segment, 3> seg{};
  double clamp_lo = 0.9, clamp_hi = 1.05;

  static PiecewiseCorrector identity(double v_min = 0.975, double v_max = 1.0) {
    PiecewiseCorrector c;
    c.v_min = v_min;
    c.v_max = v_max;
    c.clamp_lo = c.clamp_hi = 0.0;
    return c;
  }

  std::size_t segment_of(double v_hat) const {
    if (v_hat < v_min) return 0;
    if (v_hat <= v_max) return 1;
    return 2;
  }

  double correct(double v_hat) const {
    if (std::isnan(v_hat)) v_hat = 0.0;
    const auto& s = seg[segment_of(v_hat)];
    double out = v_hat;
    if (!s.identity) {
      const double x = std::clamp(v_hat, s.lo, s.hi);
      out = s.poly.evaluate(std::span<const double>(&x, 1));
    }
    if (clamp_lo < clamp_hi) out = std::clamp(out, clamp_lo, clamp_hi);
    return out;
  }
};

struct PiecewiseFit {
  PiecewiseCorrector corrector;
  std::array<bool, 3> fallback{};  // segment left as identity
  std::array<std::size_t, 3> points{};
};

// Least-squares polynomial per segment of V_true on V_hat. A segment with
// fewer than order + 1 points keeps the identity map; a history without any
// usable pair is an error.
inline PiecewiseFit fit_piecewise(const std::vector<std::pair<double, double>>& history,
                                  const CorrectorOptions& opt = {}) {
  if (!(opt.v_min_volt < opt.v_max_volt))
    throw ConfigError("corrector thresholds need v_min < v_max");
  if (opt.order < 0) throw ConfigError("corrector order must be non-negative");
  PiecewiseFit fit;
  auto& c = fit.corrector;
  c.v_min = opt.v_min_volt / opt.v_base_volt;
  c.v_max = opt.v_max_volt / opt.v_base_volt;
  c.clamp_lo = opt.clamp_lo;
  c.clamp_hi = opt.clamp_hi;

  std::array<approx::Dataset, 3> parts;
  for (const auto& [v_hat, v_true] : history) {
    if (!std::isfinite(v_hat) || !std::isfinite(v_true)) continue;
    parts[c.segment_of(v_hat)].add({v_hat}, v_true);
  }
  if (parts[0].empty() && parts[1].empty() && parts[2].empty())
    throw UnderdeterminedSegment("no usable (estimate, truth) pairs to fit the corrector");
  for (std::size_t k = 0; k < 3; ++k) {
    fit.points[k] = parts[k].size();
    auto& s = c.seg[k];
    if (parts[k].size() < static_cast<std::size_t>(opt.order) + 1) {
      s.identity = true;
      fit.fallback[k] = true;
      continue;
    }
    auto poly = approx::fit_poly(parts[k], opt.order, {.ridge = opt.ridge, .standardize = true});
    s.identity = false;
    s.poly = std::move(poly.model);
    s.lo = s.hi = parts[k].x.front()[0];
    for (const auto& row : parts[k].x) {
      s.lo = std::min(s.lo, row[0]);
      s.hi = std::max(s.hi, row[0]);
    }
  }
  return fit;
}

}  // namespace voltreg::thevenin
