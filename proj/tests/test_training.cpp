#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dsm/error.hpp"
#include "dsm/training.hpp"
#include "oracles.hpp"

using namespace dsm;

namespace {

Dataset random_dataset(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  Dataset data;
  data.inputs = RowMatrix(n, d);
  for (double& v : data.inputs.data()) v = rng.uniform(-1, 1);
  data.targets.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    data.targets[i] = std::sin(2 * data.inputs(i, 0)) + 0.5 * data.inputs(i, d - 1);
  }
  return data;
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

OptimizerConfig gd(double lr, std::size_t epochs) {
  OptimizerConfig c;
  c.kind = OptimizerKind::Gd;
  c.learning_rate = lr;
  c.epochs = epochs;
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// Metrics

TEST(Metrics, MseExamples) {
  const std::vector<double> a{1.0, -2.0, 3.5}, zero{0.0}, two{2.0};
  EXPECT_EQ(mse(a, a), 0.0);
  EXPECT_EQ(mse(zero, two), 4.0);
  const std::vector<double> p{1, 2, 3, 4}, t{0, 2, 5, 1};
  const std::vector<double> pp{4, 3, 2, 1}, tp{1, 5, 2, 0};
  EXPECT_DOUBLE_EQ(mse(p, t), mse(pp, tp));
  const std::vector<double> empty;
  EXPECT_THROW(mse(empty, empty), std::invalid_argument);
  EXPECT_THROW(mse(a, two), DimensionMismatch);
}

TEST(Metrics, SupErrorExamples) {
  const std::vector<double> p{0.1, -0.3}, zero{0.0, 0.0};
  EXPECT_DOUBLE_EQ(sup_error(p, zero), 0.3);
  EXPECT_EQ(sup_error(p, p), 0.0);
  const std::vector<double> empty;
  EXPECT_THROW(sup_error(empty, empty), std::invalid_argument);
}

TEST(Metrics, SupErrorDominatesRootMean) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> p(1 + rng.below(50)), t(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = rng.normal();
      t[i] = rng.normal();
    }
    EXPECT_GE(sup_error(p, t), std::sqrt(mse(p, t)) * (1 - 1e-15));
  }
}

// ---------------------------------------------------------------------------
// Gradient

TEST(Gradient, ScalarExample) {
  // A = 2, phi = 3, mask = 1, y = 5: g = 6 and grad = 2 (6 - 5) 3 = 6.
  DenseModel m(RowMatrix(1, 1, {3.0}), {2.0}, Activation::Identity);
  const RowMatrix x(1, 1, {1.0});
  const auto cache = FeatureCache::build(m, x);
  const std::vector<double> y{5.0};
  const std::vector<std::size_t> rows{0};
  EXPECT_DOUBLE_EQ(cache.predict(0, m.top()), 6.0);
  EXPECT_EQ(top_layer_gradient(cache, y, rows, m.top()), std::vector<double>{6.0});
}

TEST(Gradient, ZeroAtInterpolatingTop) {
  DsmModel m(DenseModel(3, 20, Activation::Relu, 2), TopKRouting{5});
  Rng rng(3);
  for (double& a : m.top()) a = rng.normal();
  auto data = random_dataset(30, 3, 4);
  const auto cache = FeatureCache::build(m, data.inputs);
  data.targets = cache.predict_all(m.top());
  const auto rows = all_rows(30);
  for (double g : top_layer_gradient(cache, data.targets, rows, m.top())) EXPECT_EQ(g, 0.0);
}

TEST(Gradient, MatchesCentralDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto inst = oracles::random_gradient_instance(seed);
    EXPECT_LT(inst.relative_error, 1e-5) << "seed " << seed;
  }
}

TEST(Gradient, NeverActivatedUnitsHaveZeroGradient) {
  DsmModel m(DenseModel(4, 32, Activation::Relu, 5), TopKRouting{2});
  const auto data = random_dataset(3, 4, 6);
  const auto cache = FeatureCache::build(m, data.inputs);
  std::vector<bool> touched(32, false);
  for (std::size_t i = 0; i < 3; ++i) {
    for (auto u : cache.units(i)) touched[u] = true;
  }
  const auto rows = all_rows(3);
  const auto grad = top_layer_gradient(cache, data.targets, rows, m.top());
  for (std::size_t j = 0; j < 32; ++j) {
    if (!touched[j]) EXPECT_EQ(grad[j], 0.0);
  }
}

// ---------------------------------------------------------------------------
// RMSProp

TEST(RmsProp, ClosedFormScalar) {
  OptimizerConfig c;
  c.learning_rate = 0.1;
  std::vector<double> v{0.0}, delta{0.0};
  const std::vector<double> g{1.0};
  rmsprop_step(v, g, c, delta);
  EXPECT_NEAR(v[0], 0.1, 1e-15);
  EXPECT_NEAR(delta[0], -0.1 / (std::sqrt(0.1) + 1e-8), 1e-15);
  EXPECT_NEAR(delta[0], -0.31623, 1e-5);
}

TEST(RmsProp, ZeroGradientAndSigns) {
  OptimizerConfig c;
  c.learning_rate = 0.01;
  std::vector<double> v{0.5, 0.2, 0.0}, delta(3);
  const std::vector<double> g{0.0, -3.0, 2.0};
  rmsprop_step(v, g, c, delta);
  EXPECT_EQ(delta[0], 0.0);
  EXPECT_DOUBLE_EQ(v[0], 0.45);
  EXPECT_GT(delta[1], 0.0);
  EXPECT_LT(delta[2], 0.0);
}

TEST(OptimizerConfig, Validation) {
  OptimizerConfig c;
  EXPECT_NO_THROW(c.validate());
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = OptimizerConfig{};
  c.rho = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = OptimizerConfig{};
  c.delta = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_EQ(optimizer_from_string(to_string(OptimizerKind::RmsProp)), OptimizerKind::RmsProp);
  EXPECT_THROW(optimizer_from_string("adam"), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Training

TEST(Train, GradientDescentBelowInverseCurvatureIsMonotone) {
  DenseModel m(4, 64, Activation::Relu, 7);
  const auto data = random_dataset(256, 4, 8);
  const auto cache = FeatureCache::build(m, data.inputs);
  const double lambda = hessian_spectral_norm(cache);
  const auto h = train(m, data, nullptr, gd(0.9 / lambda, 200));
  ASSERT_EQ(h.epochs.size(), 200u);
  for (std::size_t e = 1; e < h.epochs.size(); ++e) {
    EXPECT_LE(h.epochs[e].train_mse, h.epochs[e - 1].train_mse);
  }
}

TEST(Train, ZeroTargetsKeepZeroHistory) {
  DsmModel m(DenseModel(3, 16, Activation::Relu, 9), TopKRouting{4});
  auto data = random_dataset(50, 3, 10);
  std::fill(data.targets.begin(), data.targets.end(), 0.0);
  OptimizerConfig c;
  c.epochs = 5;
  const auto h = train(m, data, &data, c);
  ASSERT_EQ(h.epochs.size(), 5u);
  for (const auto& e : h.epochs) {
    EXPECT_EQ(e.train_mse, 0.0);
    EXPECT_EQ(*e.eval_mse, 0.0);
  }
  for (double a : m.top()) EXPECT_EQ(a, 0.0);
}

TEST(Train, NeverActivatedUnitsKeepTheirWeights) {
  for (auto kind : {OptimizerKind::Gd, OptimizerKind::Sgd, OptimizerKind::RmsProp}) {
    DsmModel m(DenseModel(4, 64, Activation::Relu, 11), TopKRouting{2});
    Rng rng(12);
    for (double& a : m.top()) a = rng.normal();
    const std::vector<double> before(m.top().begin(), m.top().end());
    const auto data = random_dataset(5, 4, 13);
    const auto cache = FeatureCache::build(m, data.inputs);
    std::vector<bool> touched(64, false);
    for (std::size_t i = 0; i < 5; ++i) {
      for (auto u : cache.units(i)) touched[u] = true;
    }
    OptimizerConfig c;
    c.kind = kind;
    c.learning_rate = 1e-3;
    c.epochs = 3;
    c.batch_size = 2;
    train(m, data, nullptr, c);
    std::size_t moved = 0;
    for (std::size_t j = 0; j < 64; ++j) {
      if (!touched[j]) {
        EXPECT_EQ(m.top()[j], before[j]);
      } else if (m.top()[j] != before[j]) {
        ++moved;
      }
    }
    EXPECT_GT(moved, 0u);
  }
}

TEST(Train, DeterministicForEqualSeeds) {
  const auto data = random_dataset(200, 5, 14);
  OptimizerConfig c;
  c.kind = OptimizerKind::Sgd;
  c.learning_rate = 1e-2;
  c.epochs = 4;
  c.batch_size = 16;
  c.seed = 99;
  auto run = [&] {
    DsmModel m(DenseModel(5, 128, Activation::Relu, 15), TopKRouting{32});
    auto h = train(m, data, &data, c);
    return std::make_pair(std::vector<double>(m.top().begin(), m.top().end()), h);
  };
  const auto [top1, h1] = run();
  const auto [top2, h2] = run();
  EXPECT_EQ(top1, top2);
  for (std::size_t e = 0; e < h1.epochs.size(); ++e) {
    EXPECT_EQ(h1.epochs[e].train_mse, h2.epochs[e].train_mse);
    EXPECT_EQ(h1.epochs[e].eval_mse, h2.epochs[e].eval_mse);
  }
}

TEST(Train, DivergenceGuardThrows) {
  DenseModel m(4, 64, Activation::Relu, 16);
  const auto data = random_dataset(100, 4, 17);
  const double lambda = hessian_spectral_norm(FeatureCache::build(m, data.inputs));
  EXPECT_THROW(train(m, data, nullptr, gd(10.0 / lambda, 200)), TrainingDiverged);
}

TEST(Train, RejectsEmptyData) {
  DenseModel m(2, 4, Activation::Relu, 1);
  Dataset empty;
  empty.inputs = RowMatrix(0, 2);
  EXPECT_THROW(train(m, empty, nullptr, OptimizerConfig{}), std::invalid_argument);
}

TEST(TrainHistory, CsvLayout) {
  TrainHistory h;
  h.epochs.push_back({1, 0.5, 0.25, 1.5});
  h.epochs.push_back({2, 0.125, std::nullopt, 2.0});
  std::ostringstream out;
  h.write_csv(out);
  EXPECT_EQ(out.str(), "epoch,train_mse,eval_mse,wall_ms\n1,0.5,0.25,1.5\n2,0.125,,2\n");
}

// ---------------------------------------------------------------------------
// Least-squares oracle

TEST(Oracle, SingleUnitClosedForm) {
  const DenseModel m(RowMatrix(1, 2, {1.0, -0.5}), {0.0}, Activation::Identity);
  const auto data = random_dataset(40, 2, 18);
  const auto cache = FeatureCache::build(m, data.inputs);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < 40; ++i) {
    const double phi = cache.values(i)[0];
    num += phi * data.targets[i];
    den += phi * phi;
  }
  const auto a = least_squares_oracle(cache, data.targets);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_NEAR(a[0], num / den, 1e-9 * std::abs(num / den));
}

TEST(Oracle, NoGradientIterateBeatsIt) {
  DsmModel m(DenseModel(3, 32, Activation::Relu, 19), TopKRouting{8});
  const auto data = random_dataset(300, 3, 20);
  const auto cache = FeatureCache::build(m, data.inputs);
  const auto star = least_squares_oracle(cache, data.targets);
  const double best = mse(cache.predict_all(star), data.targets);
  const double lambda = hessian_spectral_norm(cache);
  auto c = gd(0.9 / lambda, 1);
  for (int e = 0; e < 50; ++e) {
    train_top_layer(m.top(), cache, data.targets, nullptr, {}, c);
    EXPECT_GE(mse(cache.predict_all(m.top()), data.targets), best - 1e-12);
  }
}

TEST(Oracle, GradientDescentConvergesToOracle) {
  const auto r = oracles::gd_versus_oracle(21);
  EXPECT_LE(r.max_abs_difference, 1e-3);
}

TEST(Oracle, HessianNormMatchesDenseEigenvalue) {
  DenseModel m(RowMatrix(2, 2, {1.0, 0.0, 0.0, 1.0}), {0.0, 0.0}, Activation::Identity);
  // Phi = X, so the Hessian is (2/n) X^T X.
  const RowMatrix x(3, 2, {1.0, 0.0, 0.0, 2.0, 0.0, 0.0});
  const auto cache = FeatureCache::build(m, x);
  EXPECT_NEAR(hessian_spectral_norm(cache), 2.0 / 3.0 * 4.0, 1e-9);
}
