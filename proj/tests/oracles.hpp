#pragma once

// Test-side oracles shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dsm/training.hpp"

namespace oracles {

struct GradientCheck {
  double relative_error = 0.0;
  std::size_t width = 0;
  std::size_t batch = 0;
};

/// Random DSM or dense model, random top row and random batch; compares the
/// analytic gradient with central differences of the batch MSE (step 1e-6).
/// The error is ||fd - g||_inf / ||g||_inf.
inline GradientCheck random_gradient_instance(std::uint64_t seed) {
  dsm::Rng rng(dsm::derive_seed(seed, 0x67726164));
  const std::size_t d = 1 + rng.below(8);
  const std::size_t t = 4 + rng.below(60);
  const std::size_t n = 8 + rng.below(40);
  const std::size_t k = 1 + rng.below(t);
  const bool dense = rng.below(3) == 0;
  const auto act = rng.below(2) == 0 ? dsm::Activation::Relu : dsm::Activation::Identity;

  dsm::DenseModel core(d, t, act, rng.next_u64());
  dsm::RowMatrix x(n, d);
  for (double& v : x.data()) v = rng.uniform(-1, 1);
  std::vector<double> y(n);
  for (double& v : y) v = rng.normal();
  std::vector<double> top(t);
  for (double& a : top) a = rng.normal();

  const auto cache = dense ? dsm::FeatureCache::build(core, x)
                           : dsm::FeatureCache::build(dsm::DsmModel(core, dsm::TopKRouting{k}), x);
  std::vector<std::size_t> batch;
  for (std::size_t i = 0; i < n; ++i) {
    if (rng.below(2) == 0) batch.push_back(i);
  }
  if (batch.empty()) batch.push_back(0);

  const auto grad = dsm::top_layer_gradient(cache, y, batch, top);
  constexpr double h = 1e-6;
  double err = 0.0, scale = 0.0;
  for (std::size_t j = 0; j < t; ++j) {
    const double a = top[j];
    top[j] = a + h;
    const double up = dsm::batch_mse(cache, y, batch, top);
    top[j] = a - h;
    const double down = dsm::batch_mse(cache, y, batch, top);
    top[j] = a;
    err = std::max(err, std::abs((up - down) / (2 * h) - grad[j]));
    scale = std::max(scale, std::abs(grad[j]));
  }
  return {scale > 0 ? err / scale : err, t, batch.size()};
}

struct OracleComparison {
  double max_abs_difference = 0.0;
  std::size_t epochs = 0;
};

/// Full-batch GD from zero on a width-64 dense ReLU model (d = 64, n = 1024)
/// with step 1 / lambda_max, run until the top row is within 1e-4 of the
/// least-squares solution or the 20000-epoch budget is spent.
inline OracleComparison gd_versus_oracle(std::uint64_t seed) {
  constexpr std::size_t d = 64, t = 64, n = 1024, chunk = 250, budget = 20000;
  dsm::Rng rng(seed);
  dsm::DenseModel m(d, t, dsm::Activation::Relu, rng.next_u64());
  dsm::RowMatrix x(n, d);
  for (double& v : x.data()) v = rng.uniform(-1, 1);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = std::sin(x(i, 0) + x(i, 1)) * x(i, 2);

  const auto cache = dsm::FeatureCache::build(m, x);
  const auto star = dsm::least_squares_oracle(cache, y);
  dsm::OptimizerConfig c;
  c.kind = dsm::OptimizerKind::Gd;
  c.learning_rate = 1.0 / dsm::hessian_spectral_norm(cache);
  c.epochs = chunk;

  OracleComparison r;
  while (r.epochs < budget) {
    dsm::train_top_layer(m.top(), cache, y, nullptr, {}, c);
    r.epochs += chunk;
    r.max_abs_difference = 0.0;
    for (std::size_t j = 0; j < t; ++j) {
      r.max_abs_difference = std::max(r.max_abs_difference, std::abs(m.top()[j] - star[j]));
    }
    if (r.max_abs_difference <= 1e-4) break;
  }
  return r;
}

}  // namespace oracles
