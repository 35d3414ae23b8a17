#pragma once

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "voltreg/errors.hpp"
#include "voltreg/text.hpp"

namespace voltreg::approx {

// Text checkpoint, version 1:
//   voltreg-checkpoint,1
//   kind,<model kind>
//   shape,<d0>,<d1>,...
//   meta,<key>,<value>          (zero or more)
//   count,<n>
//   <n lines, one parameter each>
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  std::string kind;
  std::vector<std::size_t> shape;
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<double> values;

  const std::string* find_meta(const std::string& key) const {
    for (const auto& [k, v] : meta)
      if (k == key) return &v;
    return nullptr;
  }
};

inline void write_checkpoint(std::ostream& out, const Checkpoint& ck) {
  out << "voltreg-checkpoint," << kCheckpointVersion << "\n";
  out << "kind," << ck.kind << "\n";
  out << "shape";
  for (auto s : ck.shape) out << ',' << s;
  out << "\n";
  for (const auto& [k, v] : ck.meta) out << "meta," << k << ',' << v << "\n";
  out << "count," << ck.values.size() << "\n";
  for (double v : ck.values) out << text::fmt(v) << "\n";
}

inline Checkpoint read_checkpoint(std::istream& in) {
  Checkpoint ck;
  std::string raw;
  std::size_t line_no = 0;
  auto next = [&]() -> std::vector<std::string> {
    while (std::getline(in, raw)) {
      ++line_no;
      if (!text::trim(raw).empty()) return text::split(raw);
    }
    throw SchemaError("checkpoint truncated", line_no);
  };
  auto f = next();
  if (f.size() != 2 || f[0] != "voltreg-checkpoint" ||
      text::parse_int(f[1], line_no) != kCheckpointVersion)
    throw SchemaError("expected header 'voltreg-checkpoint,1'", line_no);
  f = next();
  if (f.size() != 2 || f[0] != "kind") throw SchemaError("expected kind record", line_no);
  ck.kind = f[1];
  f = next();
  if (f.empty() || f[0] != "shape") throw SchemaError("expected shape record", line_no);
  for (std::size_t i = 1; i < f.size(); ++i)
    ck.shape.push_back(static_cast<std::size_t>(text::parse_int(f[i], line_no)));
  f = next();
  while (!f.empty() && f[0] == "meta") {
    if (f.size() != 3) throw SchemaError("meta record needs key and value", line_no);
    ck.meta.emplace_back(f[1], f[2]);
    f = next();
  }
  if (f.size() != 2 || f[0] != "count") throw SchemaError("expected count record", line_no);
  const long long n = text::parse_int(f[1], line_no);
  if (n < 0) throw SchemaError("negative parameter count", line_no);
  ck.values.reserve(static_cast<std::size_t>(n));
  for (long long i = 0; i < n; ++i) {
    f = next();
    if (f.size() != 1) throw SchemaError("expected one value per line", line_no);
    ck.values.push_back(text::parse_double(f[0], line_no));
  }
  return ck;
}

// Loads `ck` into a model whose parameter count must match.
template <class M>
void restore_parameters(M& model, const Checkpoint& ck) {
  auto p = model.parameters();
  if (p.size() != ck.values.size())
    throw DimensionMismatch("checkpoint has " + std::to_string(ck.values.size()) +
                            " parameters, model has " + std::to_string(p.size()));
  std::copy(ck.values.begin(), ck.values.end(), p.begin());
}

inline void write_loss_curve(std::ostream& out, const std::vector<double>& curve) {
  out << "epoch,loss\n";
  for (std::size_t i = 0; i < curve.size(); ++i) out << i << ',' << text::fmt(curve[i]) << "\n";
}

}  // namespace voltreg::approx
