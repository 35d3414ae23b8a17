#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "voltreg/errors.hpp"

namespace voltreg::approx {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. The state is plain data so it can be copied
// together with the parameters it drives.
class Adam {
 public:
  Adam() = default;
  Adam(std::size_t n, AdamOptions opt = {}) : opt_(opt), m_(n, 0.0), v_(n, 0.0) {}

  AdamOptions& options() { return opt_; }
  const AdamOptions& options() const { return opt_; }
  long long steps() const { return t_; }

  // params -= lr * mhat / (sqrt(vhat) + eps)
  void step(std::span<double> params, std::span<const double> grad) {
    if (params.size() != m_.size() || grad.size() != m_.size())
      throw DimensionMismatch("Adam state does not match parameter count");
    ++t_;
    const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = opt_.beta1 * m_[i] + (1.0 - opt_.beta1) * grad[i];
      v_[i] = opt_.beta2 * v_[i] + (1.0 - opt_.beta2) * grad[i] * grad[i];
      params[i] -= opt_.lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + opt_.eps);
    }
  }

 private:
  AdamOptions opt_{};
  std::vector<double> m_, v_;
  long long t_ = 0;
};

}  // namespace voltreg::approx
