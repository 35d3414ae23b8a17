#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "voltreg/approx/dataset.hpp"
#include "voltreg/approx/model.hpp"
#include "voltreg/approx/optim.hpp"
#include "voltreg/errors.hpp"

namespace voltreg::approx {

template <ScalarModel M>
double mse(const M& model, const Dataset& data) {
  if (data.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double r = model.predict(data.x[i]) - data.y[i];
    s += r * r;
  }
  return s / static_cast<double>(data.size());
}

struct TrainOptions {
  double lr = 1e-3;
  int epochs = 200;
  std::size_t batch = 32;
  unsigned long long seed = 1;
  double min_lr = 1e-9;
};

struct TrainResult {
  // Full-dataset MSE before training followed by one entry per epoch.
  std::vector<double> loss_curve;
  int rejected_epochs = 0;
  double final_lr = 0.0;
};

// Minibatch Adam on squared error. An epoch whose full-dataset loss is higher
// than the previous one is rolled back and the learning rate halved, so the
// recorded curve never goes up. Accepted epochs let the rate grow back
// towards its configured value.
template <ScalarModel M>
TrainResult train_regressor(M& model, const Dataset& data, const TrainOptions& opt = {}) {
  if (data.empty()) throw DimensionMismatch("training set is empty");
  data.validate(model.input_size());
  if (opt.batch == 0) throw DimensionMismatch("batch size must be positive");

  const std::size_t n_par = model.parameter_count();
  Adam adam(n_par, {.lr = opt.lr});
  std::mt19937_64 rng(opt.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> grad(n_par);

  TrainResult res;
  double current = mse(model, data);
  res.loss_curve.push_back(current);

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    const std::vector<double> snapshot(model.parameters().begin(), model.parameters().end());
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += opt.batch) {
      const std::size_t stop = std::min(order.size(), start + opt.batch);
      std::fill(grad.begin(), grad.end(), 0.0);
      const double w = 2.0 / static_cast<double>(stop - start);
      for (std::size_t j = start; j < stop; ++j) {
        const std::size_t i = order[j];
        const double r = model.predict(data.x[i]) - data.y[i];
        model.backprop(data.x[i], w * r, grad);
      }
      adam.step(model.parameters(), grad);
    }
    const double next = mse(model, data);
    if (!std::isfinite(next) || next > current) {
      std::copy(snapshot.begin(), snapshot.end(), model.parameters().begin());
      // Restart the moments too: the stale momentum is what overshot.
      adam = Adam(n_par, {.lr = std::max(opt.min_lr, 0.5 * adam.options().lr)});
      ++res.rejected_epochs;
    } else {
      current = next;
      adam.options().lr = std::min(opt.lr, 1.1 * adam.options().lr);
    }
    res.loss_curve.push_back(current);
  }
  res.final_lr = adam.options().lr;
  return res;
}

// Largest relative gap between analytic parameter gradients and central
// finite differences of predict(x). Gaps are measured relative to
// max(|analytic|, |numeric|, floor) so that parameters with (near) zero
// gradient are compared in absolute terms.
template <ScalarModel M>
double grad_check(M& model, std::span<const double> x, double eps = 1e-5, double floor = 1e-6) {
  const std::size_t n = model.parameter_count();
  std::vector<double> analytic(n, 0.0);
  model.backprop(x, 1.0, analytic);
  auto params = model.parameters();
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double keep = params[i];
    params[i] = keep + eps;
    const double up = model.predict(x);
    params[i] = keep - eps;
    const double down = model.predict(x);
    params[i] = keep;
    const double numeric = (up - down) / (2.0 * eps);
    const double scale = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / scale);
  }
  return worst;
}

}  // namespace voltreg::approx
