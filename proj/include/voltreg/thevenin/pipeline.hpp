#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <utility>
#include <vector>

#include "voltreg/approx/scaler.hpp"
#include "voltreg/approx/tiny_encoder.hpp"
#include "voltreg/approx/training.hpp"
#include "voltreg/errors.hpp"
#include "voltreg/text.hpp"
#include "voltreg/thevenin/corrector.hpp"
#include "voltreg/thevenin/thevenin.hpp"

namespace voltreg::thevenin {

// What one smart meter recorded over time, per unit. Net metered load is
// demand plus storage power.
struct MeterSeries {
  std::vector<double> v;
  std::vector<double> pd, qd;
  std::vector<double> pb, qb;

  std::size_t size() const { return v.size(); }
  double p(std::size_t t) const { return pd[t] + pb[t]; }
  double q(std::size_t t) const { return qd[t] + qb[t]; }
  SmSample sample(std::size_t t) const {
    return SmSample::from_meter(static_cast<long long>(t), v[t], p(t), q(t));
  }
  void push(double v_mag, double pd_, double qd_, double pb_, double qb_) {
    v.push_back(v_mag);
    pd.push_back(pd_);
    qd.push_back(qd_);
    pb.push_back(pb_);
    qb.push_back(qb_);
  }
};

inline constexpr std::size_t kSensitivityInputs = 9;
using SensitivityInput = std::array<double, kSensitivityInputs>;

// Order: action (fraction of rating), demand, V lags, metered P lags,
// source magnitude, impedance magnitude, corrected estimate.
inline SensitivityInput sensitivity_input(double a_frac, double pd, double v1, double v2, double p1,
                                          double p2, const TheveninParams& th, double v_adj) {
  return {a_frac, pd, v1, v2, p1, p2, std::clamp(th.e_th, 0.0, 2.0), std::clamp(th.z_abs(), 0.0, 1.0),
          v_adj};
}

struct SensitivityModel {
  approx::TinyEncoder net;
  approx::Standardizer scaler;

  double predict(const SensitivityInput& in) const {
    SensitivityInput z;
    scaler.transform_x(in, z);
    return scaler.inverse_y(net.predict(z));
  }
};

// Last two meter samples of a node and the equivalent tracked from them.
struct LocalTracker {
  std::optional<SmSample> s2, s1;
  TheveninParams th;
  double last_v_adj = 1.0;

  void push(const SmSample& s) {
    if (s1) th = estimate_thevenin(*s1, s, th);
    s2 = s1;
    s1 = s;
  }
  bool ready() const { return s1.has_value() && s2.has_value(); }
};

struct LocalEstimate {
  TheveninParams th;
  double v_hat = 0.0;     // quartic root, NaN when infeasible
  bool feasible = false;
  double v_adj = 0.0;     // after the piecewise correction
  double v_tilde = 0.0;   // after the sensitivity model
};

struct LocalPipeline {
  PiecewiseCorrector corrector = PiecewiseCorrector::identity();
  std::optional<SensitivityModel> sensitivity;
  double p_max = 0.6;  // storage rating, p.u.
};

// Estimate at the next step given its demand and a storage action (p.u.).
// An infeasible quartic holds the previous corrected value.
inline LocalEstimate estimate_local_voltage(const LocalPipeline& pl, const LocalTracker& tr, double a,
                                            double pd, double qd, double qa = 0.0) {
  LocalEstimate est;
  est.th = tr.th;
  const auto root = solve_quartic_voltage(tr.th, -(pd + a), -(qd + qa));
  est.feasible = root.has_value();
  est.v_hat = root ? *root : std::numeric_limits<double>::quiet_NaN();
  est.v_adj = root ? pl.corrector.correct(*root) : tr.last_v_adj;
  est.v_tilde = est.v_adj;
  if (pl.sensitivity && tr.ready()) {
    const auto in = sensitivity_input(pl.p_max > 0.0 ? a / pl.p_max : 0.0, pd, std::abs(tr.s1->v),
                                      std::abs(tr.s2->v), tr.s1->p, tr.s2->p, tr.th, est.v_adj);
    est.v_tilde = pl.sensitivity->predict(in);
  }
  return est;
}

// Raw quartic estimates along a recorded series (first two steps skipped).
struct RawPoint {
  std::size_t t = 0;
  TheveninParams th;
  double v_hat = 0.0;
  bool feasible = false;
};

inline std::vector<RawPoint> raw_estimates(const MeterSeries& m) {
  std::vector<RawPoint> out;
  LocalTracker tr;
  for (std::size_t t = 0; t < m.size(); ++t) {
    if (tr.ready()) {
      const auto root = solve_quartic_voltage(tr.th, -m.p(t), -m.q(t));
      out.push_back({t, tr.th, root ? *root : std::numeric_limits<double>::quiet_NaN(), root.has_value()});
    }
    tr.push(m.sample(t));
  }
  return out;
}

struct PipelineTrainOptions {
  CorrectorOptions corrector;
  approx::TinyEncoderConfig encoder;
  approx::TrainOptions train{.lr = 1e-3, .epochs = 200, .batch = 32, .seed = 1};
  double train_fraction = 0.8;
  unsigned long long init_seed = 1;
  bool use_sensitivity = true;
};

struct PipelineReport {
  PiecewiseFit piecewise;
  approx::TrainResult training;
  double train_rmse = 0.0;  // p.u., on the sensitivity output
  double val_rmse = 0.0;
  std::size_t samples = 0;
};

// Fits the corrector on (raw estimate, truth) pairs of `hist`, then the
// sensitivity model on the corrected stream. The series must carry the
// storage actions that were applied while it was recorded.
inline std::pair<LocalPipeline, PipelineReport> fit_local_pipeline(const MeterSeries& hist, double p_max,
                                                                    const PipelineTrainOptions& opt = {}) {
  const auto raw = raw_estimates(hist);
  std::vector<std::pair<double, double>> pairs;
  for (const auto& r : raw)
    if (r.feasible) pairs.emplace_back(r.v_hat, hist.v[r.t]);

  LocalPipeline pl;
  pl.p_max = p_max;
  PipelineReport rep;
  rep.piecewise = fit_piecewise(pairs, opt.corrector);
  pl.corrector = rep.piecewise.corrector;
  rep.samples = raw.size();
  if (!opt.use_sensitivity) return {std::move(pl), std::move(rep)};

  approx::Dataset data;
  double held = 1.0;
  for (const auto& r : raw) {
    const std::size_t t = r.t;
    const double v_adj = r.feasible ? pl.corrector.correct(r.v_hat) : held;
    held = v_adj;
    const auto in = sensitivity_input(p_max > 0.0 ? hist.pb[t] / p_max : 0.0, hist.pd[t], hist.v[t - 1],
                                      hist.v[t - 2], hist.p(t - 1), hist.p(t - 2), r.th, v_adj);
    data.add(std::vector<double>(in.begin(), in.end()), hist.v[t]);
  }
  if (data.size() < 10) throw UnderdeterminedSegment("too little history to train the sensitivity model");
  auto [train, val] = data.split(opt.train_fraction);

  SensitivityModel sm;
  sm.scaler = approx::Standardizer::fit(train);
  approx::TinyEncoderConfig ecfg = opt.encoder;
  ecfg.features = kSensitivityInputs;
  sm.net = approx::TinyEncoder(ecfg);
  std::mt19937_64 rng(opt.init_seed);
  sm.net.initialize(rng);
  rep.training = approx::train_regressor(sm.net, sm.scaler.transform(train), opt.train);

  auto rmse_of = [&](const approx::Dataset& d) {
    if (d.empty()) return 0.0;
    double s = 0.0;
    SensitivityInput in;
    for (std::size_t i = 0; i < d.size(); ++i) {
      std::copy(d.x[i].begin(), d.x[i].end(), in.begin());
      const double r = sm.predict(in) - d.y[i];
      s += r * r;
    }
    return std::sqrt(s / static_cast<double>(d.size()));
  };
  rep.train_rmse = rmse_of(train);
  rep.val_rmse = rmse_of(val);
  pl.sensitivity = std::move(sm);
  return {std::move(pl), std::move(rep)};
}

// Per-step comparison of every stage against the recorded truth.
struct TraceRow {
  std::size_t t = 0;
  double v_true = 0.0, v_hat = 0.0, v_adj = 0.0, v_tilde = 0.0;
  double rel_err1 = 0.0;  // corrected estimate
  double rel_err2 = 0.0;  // after the sensitivity model
};

inline std::vector<TraceRow> estimation_trace(const LocalPipeline& pl, const MeterSeries& m) {
  std::vector<TraceRow> rows;
  LocalTracker tr;
  for (std::size_t t = 0; t < m.size(); ++t) {
    if (tr.ready()) {
      const auto est = estimate_local_voltage(pl, tr, m.pb[t], m.pd[t], m.qd[t], m.qb[t]);
      TraceRow r{t, m.v[t], est.v_hat, est.v_adj, est.v_tilde, 0.0, 0.0};
      r.rel_err1 = (est.v_adj - m.v[t]) / m.v[t];
      r.rel_err2 = (est.v_tilde - m.v[t]) / m.v[t];
      rows.push_back(r);
      tr.last_v_adj = est.v_adj;
    }
    tr.push(m.sample(t));
  }
  return rows;
}

inline void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& rows) {
  out << "t,V_true,V_hat,V_adj,V_tilde,rel_err1,rel_err2\n";
  for (const auto& r : rows)
    out << r.t << ',' << text::fmt(r.v_true) << ',' << text::fmt(r.v_hat) << ',' << text::fmt(r.v_adj) << ','
        << text::fmt(r.v_tilde) << ',' << text::fmt(r.rel_err1) << ',' << text::fmt(r.rel_err2) << '\n';
}

}  // namespace voltreg::thevenin
