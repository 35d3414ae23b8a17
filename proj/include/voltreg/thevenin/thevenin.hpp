#pragma once

#include <cmath>
#include <complex>
#include <optional>

namespace voltreg::thevenin {

using cplx = std::complex<double>;

// One smart-meter reading at a node, per unit. `i` is the current flowing
// from the network into the node.
struct SmSample {
  long long t = 0;
  cplx v{1.0, 0.0};
  cplx i{0.0, 0.0};
  double p = 0.0;  // net active load
  double q = 0.0;

  // A meter only sees magnitudes, so its own voltage is the angle reference
  // and the current follows from S = V conj(I).
  static SmSample from_meter(long long t, double v_mag, double p, double q) {
    return {t, {v_mag, 0.0}, cplx{p, -q} / v_mag, p, q};
  }

  // Full phasors, e.g. taken from a power-flow solution.
  static SmSample from_phasor(long long t, cplx v, double p, double q) {
    return {t, v, std::conj(cplx{p, q} / v), p, q};
  }
};

struct TheveninParams {
  double e_th = 1.0;
  double r_th = 0.0;
  double x_th = 0.0;
  bool fresh = false;

  double z_abs() const { return std::hypot(r_th, x_th); }
};

inline constexpr double kCurrentGuard = 1e-4;

// Source and impedance from two consecutive operating points:
//   Z = (V_t - V_t1) / (I_t1 - I_t),  E = (V_t I_t1 - V_t1 I_t) / (I_t1 - I_t).
// When the two currents nearly coincide the previous estimate is kept.
inline TheveninParams estimate_thevenin(const SmSample& s_prev, const SmSample& s_next,
                                        const TheveninParams& prev, double guard = kCurrentGuard) {
  const cplx di = s_next.i - s_prev.i;
  if (!(std::abs(di) >= guard)) {
    TheveninParams kept = prev;
    kept.fresh = false;
    return kept;
  }
  const cplx z = (s_prev.v - s_next.v) / di;
  const cplx e = (s_prev.v * s_next.i - s_next.v * s_prev.i) / di;
  // A negative resistance is non-physical for a passive feeder.
  return {std::abs(e), std::max(0.0, z.real()), z.imag(), true};
}

// Coefficients of V^4 + b V^2 + c = 0 for the equivalent with powers (p, q).
struct Quartic {
  double a = 1.0, b = 0.0, c = 0.0;

  static Quartic of(const TheveninParams& th, double p, double q) {
    return {1.0, -2.0 * (th.r_th * p + th.x_th * q) - th.e_th * th.e_th,
            (p * p + q * q) * (th.r_th * th.r_th + th.x_th * th.x_th)};
  }
  double residual(double v) const {
    const double v2 = v * v;
    return a * v2 * v2 + b * v2 + c;
  }
};

// Larger root V = sqrt((-b + sqrt(b^2 - 4ac)) / 2a). Empty when the operating
// point lies beyond the equivalent's loadability. `p`, `q` follow the sign
// convention of the quartic: they are the powers delivered by the node into
// the equivalent, so a consuming node passes its load negated.
inline std::optional<double> solve_quartic_voltage(const TheveninParams& th, double p, double q) {
  const Quartic k = Quartic::of(th, p, q);
  if (k.c == 0.0) {
    // Exact in this case and avoids rounding in the general formula.
    const double v2 = -k.b;
    if (!(v2 > 0.0)) return std::nullopt;
    return th.e_th * th.e_th == v2 ? th.e_th : std::sqrt(v2);
  }
  const double disc = k.b * k.b - 4.0 * k.a * k.c;
  if (!(disc >= 0.0)) return std::nullopt;
  // Stable form of the larger root: avoids cancellation when b > 0.
  const double sq = std::sqrt(disc);
  const double v2 = k.b <= 0.0 ? (-k.b + sq) / (2.0 * k.a) : (2.0 * k.c) / (-k.b - sq);
  if (!(v2 > 0.0) || !std::isfinite(v2)) return std::nullopt;
  double v = std::sqrt(v2);
  // One Newton polish on the quartic in V keeps the residual at rounding level.
  const double d = 4.0 * v * v * v + 2.0 * k.b * v;
  if (d != 0.0) {
    const double polished = v - k.residual(v) / d;
    if (std::abs(k.residual(polished)) < std::abs(k.residual(v))) v = polished;
  }
  return v;
}

}  // namespace voltreg::thevenin
