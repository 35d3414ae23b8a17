#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "voltreg/errors.hpp"
#include "voltreg/text.hpp"

namespace voltreg::assets {

// Uniformly sampled per-node demand. p_w[t][k] is the net active demand of
// node_ids[k] at step t (negative for export); pf[t][k] its power factor.
struct LoadProfile {
  int resolution_min = 15;
  long long start_min = 0;
  std::vector<std::string> node_ids;
  std::vector<std::vector<double>> p_w;
  std::vector<std::vector<double>> pf;

  std::size_t steps() const { return p_w.size(); }
  int steps_per_day() const { return 24 * 60 / resolution_min; }
  double dt_hours() const { return resolution_min / 60.0; }

  std::ptrdiff_t column(const std::string& node) const {
    auto it = std::find(node_ids.begin(), node_ids.end(), node);
    return it == node_ids.end() ? -1 : it - node_ids.begin();
  }

  double q_var(std::size_t t, std::size_t k) const {
    return p_w[t][k] * std::tan(std::acos(pf[t][k]));
  }

  // Steps [first, first + count) as a new profile.
  LoadProfile slice(std::size_t first, std::size_t count) const {
    if (first + count > steps()) throw Error("profile slice out of range");
    LoadProfile out;
    out.resolution_min = resolution_min;
    out.start_min = start_min + static_cast<long long>(first) * resolution_min;
    out.node_ids = node_ids;
    out.p_w.assign(p_w.begin() + first, p_w.begin() + first + count);
    out.pf.assign(pf.begin() + first, pf.begin() + first + count);
    return out;
  }
};

// CSV schema, version 1:
//   voltreg-profile,1
//   timestamp,node_id,p_watt,power_factor
//   <minutes since start>,<node>,<W>,<pf in (0,1]>
// Rows are grouped by timestamp; every timestamp lists the same nodes once.
inline constexpr int kProfileVersion = 1;

inline LoadProfile parse_profile(std::istream& in) {
  LoadProfile prof;
  std::string raw;
  std::size_t line_no = 0;
  int header_state = 0;

  bool have_group = false;
  long long current_t = 0;
  std::vector<double> row_p, row_pf;
  std::vector<bool> filled;
  bool first_group = true;

  auto close_group = [&](std::size_t at_line) {
    if (!have_group) return;
    if (first_group) {
      first_group = false;
    } else {
      for (std::size_t k = 0; k < filled.size(); ++k)
        if (!filled[k])
          throw GapError("timestamp " + std::to_string(current_t) + " misses node " +
                             prof.node_ids[k],
                         at_line);
    }
    prof.p_w.push_back(row_p);
    prof.pf.push_back(row_pf);
  };

  while (std::getline(in, raw)) {
    ++line_no;
    if (text::trim(raw).empty()) continue;
    const auto f = text::split(raw);
    if (header_state == 0) {
      if (f.size() != 2 || f[0] != "voltreg-profile")
        throw SchemaError("expected version header 'voltreg-profile,1'", line_no);
      if (text::parse_int(f[1], line_no) != kProfileVersion)
        throw SchemaError("unsupported profile version " + f[1], line_no);
      header_state = 1;
      continue;
    }
    if (header_state == 1) {
      if (f != std::vector<std::string>{"timestamp", "node_id", "p_watt", "power_factor"})
        throw SchemaError("expected columns timestamp,node_id,p_watt,power_factor", line_no);
      header_state = 2;
      continue;
    }
    if (f.size() != 4) throw SchemaError("expected 4 columns", line_no);
    const long long t = text::parse_int(f[0], line_no);
    const std::string& node = f[1];
    const double p = text::parse_double(f[2], line_no);
    const double pf = text::parse_double(f[3], line_no);
    if (!(pf > 0.0 && pf <= 1.0)) throw SchemaError("power factor must lie in (0, 1]", line_no);
    if (!std::isfinite(p)) throw SchemaError("non-finite power", line_no);

    if (!have_group || t != current_t) {
      if (have_group) {
        if (t < current_t) throw GapError("timestamps out of order", line_no);
        const long long step = t - current_t;
        if (prof.p_w.empty() && first_group) {
          prof.resolution_min = static_cast<int>(step);
        } else if (step != prof.resolution_min) {
          throw GapError("non-uniform time step " + std::to_string(step) + " min (expected " +
                             std::to_string(prof.resolution_min) + ")",
                         line_no);
        }
      } else {
        prof.start_min = t;
      }
      close_group(line_no);
      have_group = true;
      current_t = t;
      row_p.assign(prof.node_ids.size(), 0.0);
      row_pf.assign(prof.node_ids.size(), 1.0);
      filled.assign(prof.node_ids.size(), false);
    }

    auto it = std::find(prof.node_ids.begin(), prof.node_ids.end(), node);
    if (it == prof.node_ids.end()) {
      if (!first_group) throw GapError("node " + node + " not present at the first timestamp", line_no);
      prof.node_ids.push_back(node);
      row_p.push_back(p);
      row_pf.push_back(pf);
      filled.push_back(true);
      continue;
    }
    const auto k = static_cast<std::size_t>(it - prof.node_ids.begin());
    if (filled[k])
      throw GapError("duplicated timestamp " + std::to_string(t) + " for node " + node, line_no);
    row_p[k] = p;
    row_pf[k] = pf;
    filled[k] = true;
  }
  if (header_state < 2) throw SchemaError("missing profile header");
  close_group(line_no + 1);
  if (prof.p_w.empty()) throw SchemaError("profile has no rows");
  if (prof.resolution_min <= 0) throw GapError("non-positive time step", 0);
  return prof;
}

inline LoadProfile load_profiles(const std::string& path) {
  std::istringstream in(text::read_file(path));
  return parse_profile(in);
}

inline void write_profile(std::ostream& out, const LoadProfile& prof) {
  out << "voltreg-profile," << kProfileVersion << "\n";
  out << "timestamp,node_id,p_watt,power_factor\n";
  for (std::size_t t = 0; t < prof.steps(); ++t) {
    const long long ts = prof.start_min + static_cast<long long>(t) * prof.resolution_min;
    for (std::size_t k = 0; k < prof.node_ids.size(); ++k)
      out << ts << ',' << prof.node_ids[k] << ',' << text::fmt(prof.p_w[t][k]) << ','
          << text::fmt(prof.pf[t][k]) << '\n';
  }
}

// Residential load generator: a diurnal shape with a small morning peak and a
// dominant evening peak, day-to-day scaling and per-step multiplicative noise.
// Optional rooftop PV is subtracted around noon.
struct SyntheticLoad {
  std::string node;
  double peak_w = 10e3;
  double pv_peak_w = 0.0;
  double pf = 0.95;
};

struct SyntheticOptions {
  int days = 1;
  int resolution_min = 15;
  double day_spread = 0.08;   // std of the daily scale factor
  double step_noise = 0.08;   // std of the per-step multiplicative noise
  double phase_spread_h = 0.5;
  unsigned long long seed = 1;
};

inline double residential_shape(double hour) {
  auto bump = [](double h, double centre, double width) {
    double d = std::abs(h - centre);
    d = std::min(d, 24.0 - d);
    return std::exp(-(d / width) * (d / width));
  };
  return 0.22 + 0.30 * bump(hour, 7.5, 1.3) + 0.16 * bump(hour, 13.0, 2.5) +
         0.74 * bump(hour, 19.25, 1.9);
}

inline LoadProfile synthetic_profile(const std::vector<SyntheticLoad>& loads,
                                     const SyntheticOptions& opt) {
  LoadProfile prof;
  prof.resolution_min = opt.resolution_min;
  for (const auto& l : loads) prof.node_ids.push_back(l.node);
  const int per_day = 24 * 60 / opt.resolution_min;
  const std::size_t n = loads.size();

  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);

  std::vector<double> phase(n);
  for (auto& p : phase) p = opt.phase_spread_h * uni(rng);

  for (int d = 0; d < opt.days; ++d) {
    std::vector<double> day_scale(n);
    const double common = 1.0 + opt.day_spread * unit(rng);
    for (auto& s : day_scale) s = std::max(0.3, common + 0.5 * opt.day_spread * unit(rng));
    const double clouds = 0.6 + 0.4 * (0.5 + 0.5 * uni(rng));
    for (int s = 0; s < per_day; ++s) {
      const double hour = (s + 0.5) * opt.resolution_min / 60.0;
      std::vector<double> row_p(n), row_pf(n);
      for (std::size_t k = 0; k < n; ++k) {
        const double noise = std::max(0.2, 1.0 + opt.step_noise * unit(rng));
        double p = loads[k].peak_w * residential_shape(hour + phase[k]) * day_scale[k] * noise;
        if (loads[k].pv_peak_w > 0.0) {
          const double sun = std::max(0.0, std::sin(std::numbers::pi * (hour - 6.0) / 13.0));
          p -= loads[k].pv_peak_w * sun * sun * clouds;
        }
        row_p[k] = p;
        row_pf[k] = loads[k].pf;
      }
      prof.p_w.push_back(std::move(row_p));
      prof.pf.push_back(std::move(row_pf));
    }
  }
  return prof;
}

}  // namespace voltreg::assets
