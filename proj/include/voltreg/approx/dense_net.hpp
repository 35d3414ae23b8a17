#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "voltreg/errors.hpp"

namespace voltreg::approx {

enum class Activation { tanh, identity };

// Fully connected network with a scalar output. Hidden layers use the
// configured activation, the output layer is linear. Parameters of layer l are
// stored as W (out x in, row-major) followed by b (out).
class DenseNet {
 public:
  DenseNet() = default;

  DenseNet(std::vector<std::size_t> sizes, Activation hidden = Activation::tanh)
      : sizes_(std::move(sizes)), hidden_(hidden) {
    if (sizes_.size() < 2 || sizes_.back() != 1)
      throw DimensionMismatch("DenseNet needs at least an input and a scalar output layer");
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      offsets_.push_back(total);
      total += sizes_[l + 1] * sizes_[l] + sizes_[l + 1];
    }
    params_.assign(total, 0.0);
  }

  // Uniform fan-in initialisation, U(-1/sqrt(in), 1/sqrt(in)) for weights and
  // zero biases.
  void initialize(std::mt19937_64& rng, double output_gain = 1.0) {
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
      std::uniform_real_distribution<double> u(-bound, bound);
      double* w = params_.data() + offsets_[l];
      const std::size_t nw = sizes_[l + 1] * sizes_[l];
      const double gain = (l + 2 == sizes_.size()) ? output_gain : 1.0;
      for (std::size_t i = 0; i < nw; ++i) w[i] = gain * u(rng);
      for (std::size_t i = 0; i < sizes_[l + 1]; ++i) w[nw + i] = 0.0;
    }
  }

  const std::vector<std::size_t>& sizes() const { return sizes_; }
  std::size_t input_size() const { return sizes_.front(); }
  std::size_t parameter_count() const { return params_.size(); }
  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }

  double predict(std::span<const double> x) const {
    auto& ws = workspace();
    return forward(x, ws);
  }

  double backprop(std::span<const double> x, double upstream, std::span<double> grad) const {
    if (grad.size() != params_.size()) throw DimensionMismatch("gradient buffer size mismatch");
    auto& ws = workspace();
    const double out = forward(x, ws);
    // delta for the current layer's outputs (pre-activation).
    ws.delta.assign(1, upstream);
    for (std::size_t l = sizes_.size() - 1; l-- > 0;) {
      const std::size_t in = sizes_[l], out_n = sizes_[l + 1];
      const double* w = params_.data() + offsets_[l];
      double* gw = grad.data() + offsets_[l];
      double* gb = gw + in * out_n;
      const std::vector<double>& a_in = ws.acts[l];
      for (std::size_t o = 0; o < out_n; ++o) {
        const double d = ws.delta[o];
        if (d == 0.0) continue;
        gb[o] += d;
        for (std::size_t i = 0; i < in; ++i) gw[o * in + i] += d * a_in[i];
      }
      if (l == 0) break;
      ws.next.assign(in, 0.0);
      for (std::size_t o = 0; o < out_n; ++o) {
        const double d = ws.delta[o];
        if (d == 0.0) continue;
        for (std::size_t i = 0; i < in; ++i) ws.next[i] += d * w[o * in + i];
      }
      if (hidden_ == Activation::tanh)
        for (std::size_t i = 0; i < in; ++i) ws.next[i] *= 1.0 - a_in[i] * a_in[i];
      ws.delta.swap(ws.next);
    }
    return out;
  }

 private:
  struct Workspace {
    std::vector<std::vector<double>> acts;
    std::vector<double> delta, next;
  };

  static Workspace& workspace() {
    thread_local Workspace ws;
    return ws;
  }

  double forward(std::span<const double> x, Workspace& ws) const {
    if (x.size() != sizes_.front()) throw DimensionMismatch("DenseNet input has wrong dimension");
    ws.acts.resize(sizes_.size());
    ws.acts[0].assign(x.begin(), x.end());
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      const std::size_t in = sizes_[l], out_n = sizes_[l + 1];
      const double* w = params_.data() + offsets_[l];
      const double* b = w + in * out_n;
      auto& a_out = ws.acts[l + 1];
      a_out.resize(out_n);
      const auto& a_in = ws.acts[l];
      const bool last = l + 2 == sizes_.size();
      for (std::size_t o = 0; o < out_n; ++o) {
        double s = b[o];
        for (std::size_t i = 0; i < in; ++i) s += w[o * in + i] * a_in[i];
        a_out[o] = (!last && hidden_ == Activation::tanh) ? std::tanh(s) : s;
      }
    }
    return ws.acts.back()[0];
  }

  std::vector<std::size_t> sizes_;
  Activation hidden_ = Activation::tanh;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

}  // namespace voltreg::approx
