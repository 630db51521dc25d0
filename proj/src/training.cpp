#include "dsm/training.hpp"

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <numeric>

#include "dsm/error.hpp"
#include "dsm/rng.hpp"

namespace dsm {

namespace {
void check_pair(std::span<const double> p, std::span<const double> t, const char* where) {
  require(!p.empty(), std::string(where) + ": empty input");
  require_dim(p.size(), t.size(), where);
}
}  // namespace

double mse(std::span<const double> predictions, std::span<const double> targets) {
  check_pair(predictions, targets, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double r = predictions[i] - targets[i];
    s += r * r;
  }
  return s / static_cast<double>(predictions.size());
}

double sup_error(std::span<const double> predictions, std::span<const double> targets) {
  check_pair(predictions, targets, "sup_error");
  double s = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    s = std::max(s, std::abs(predictions[i] - targets[i]));
  }
  return s;
}

std::string to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::Gd: return "gd";
    case OptimizerKind::Sgd: return "sgd";
    case OptimizerKind::RmsProp: return "rmsprop";
  }
  return "rmsprop";
}

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "gd") return OptimizerKind::Gd;
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "rmsprop") return OptimizerKind::RmsProp;
  throw std::invalid_argument("unknown optimizer: " + s);
}

void OptimizerConfig::validate() const {
  require(learning_rate > 0.0 && std::isfinite(learning_rate),
          "optimizer: learning_rate must be positive");
  require(epochs >= 1, "optimizer: epochs must be >= 1");
  require(kind == OptimizerKind::Gd || batch_size >= 1, "optimizer: batch_size must be >= 1");
  require(rho > 0.0 && rho < 1.0, "optimizer: rho must lie in (0, 1)");
  require(delta > 0.0, "optimizer: delta must be positive");
}

void TrainHistory::write_csv(std::ostream& out) const {
  out << "epoch,train_mse,eval_mse,wall_ms\n";
  for (const auto& e : epochs) {
    out << e.epoch << ',' << format_double(e.train_mse) << ','
        << (e.eval_mse ? format_double(*e.eval_mse) : std::string()) << ','
        << format_double(e.wall_ms) << '\n';
  }
}

double FeatureCache::predict(std::size_t i, std::span<const double> top) const noexcept {
  const auto u = units(i);
  const auto v = values(i);
  double g = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) g += top[u[k]] * v[k];
  return g;
}

std::vector<double> FeatureCache::predict_all(std::span<const double> top) const {
  std::vector<double> out(rows());
  for (std::size_t i = 0; i < rows(); ++i) out[i] = predict(i, top);
  return out;
}

double batch_mse(const FeatureCache& cache, std::span<const double> targets,
                 std::span<const std::size_t> batch, std::span<const double> top) {
  require(!batch.empty(), "batch_mse: empty batch");
  double s = 0.0;
  for (std::size_t i : batch) {
    const double r = cache.predict(i, top) - targets[i];
    s += r * r;
  }
  return s / static_cast<double>(batch.size());
}

namespace {

void accumulate_gradient(const FeatureCache& cache, std::span<const double> targets,
                         std::span<const std::size_t> batch, std::span<const double> top,
                         std::span<double> grad) {
  std::fill(grad.begin(), grad.end(), 0.0);
  const double scale = 2.0 / static_cast<double>(batch.size());
  for (std::size_t i : batch) {
    const double r = scale * (cache.predict(i, top) - targets[i]);
    const auto u = cache.units(i);
    const auto v = cache.values(i);
    for (std::size_t k = 0; k < u.size(); ++k) grad[u[k]] += r * v[k];
  }
}

double full_mse(const FeatureCache& cache, std::span<const double> targets,
                std::span<const double> top) {
  double s = 0.0;
  for (std::size_t i = 0; i < cache.rows(); ++i) {
    const double r = cache.predict(i, top) - targets[i];
    s += r * r;
  }
  return s / static_cast<double>(cache.rows());
}

}  // namespace

std::vector<double> top_layer_gradient(const FeatureCache& cache, std::span<const double> targets,
                                       std::span<const std::size_t> batch,
                                       std::span<const double> top) {
  require(!batch.empty(), "top_layer_gradient: empty batch");
  require_dim(cache.width(), top.size(), "top_layer_gradient top row");
  require_dim(cache.rows(), targets.size(), "top_layer_gradient targets");
  std::vector<double> grad(cache.width());
  accumulate_gradient(cache, targets, batch, top, grad);
  return grad;
}

void rmsprop_step(std::span<double> v, std::span<const double> grad,
                  const OptimizerConfig& config, std::span<double> delta) {
  require_dim(v.size(), grad.size(), "rmsprop_step gradient");
  require_dim(v.size(), delta.size(), "rmsprop_step delta");
  for (std::size_t j = 0; j < v.size(); ++j) {
    v[j] = config.rho * v[j] + (1.0 - config.rho) * grad[j] * grad[j];
    delta[j] = -config.learning_rate * grad[j] / (std::sqrt(v[j]) + config.delta);
  }
}

TrainHistory train_top_layer(std::span<double> top, const FeatureCache& train,
                             std::span<const double> train_targets, const FeatureCache* eval,
                             std::span<const double> eval_targets, const OptimizerConfig& config) {
  config.validate();
  require_dim(train.width(), top.size(), "train top row");
  require_dim(train.rows(), train_targets.size(), "train targets");
  require(train.rows() >= 1, "train: empty training set");
  if (eval != nullptr) require_dim(eval->rows(), eval_targets.size(), "eval targets");

  const std::size_t n = train.rows();
  const std::size_t t = train.width();
  const std::size_t batch =
      config.kind == OptimizerKind::Gd ? n : std::min(config.batch_size, n);

  Rng rng(config.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> grad(t), delta(t), v(t, 0.0);

  TrainHistory history;
  history.epochs.reserve(config.epochs);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    if (config.kind != OptimizerKind::Gd) {
      for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    }
    for (std::size_t b = 0; b < n; b += batch) {
      const std::span<const std::size_t> rows(order.data() + b, std::min(batch, n - b));
      accumulate_gradient(train, train_targets, rows, top, grad);
      if (config.kind == OptimizerKind::RmsProp) {
        rmsprop_step(v, grad, config, delta);
        for (std::size_t j = 0; j < t; ++j) top[j] += delta[j];
      } else {
        for (std::size_t j = 0; j < t; ++j) top[j] -= config.learning_rate * grad[j];
      }
    }

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.train_mse = full_mse(train, train_targets, top);
    if (!(rec.train_mse <= kDivergenceLimit)) {
      throw TrainingDiverged("train: MSE " + format_double(rec.train_mse) + " at epoch " +
                             std::to_string(rec.epoch) + " exceeds the divergence guard");
    }
    if (eval != nullptr) rec.eval_mse = full_mse(*eval, eval_targets, top);
    rec.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    history.epochs.push_back(rec);
  }
  return history;
}

std::vector<double> least_squares_oracle(const FeatureCache& cache,
                                         std::span<const double> targets) {
  constexpr double kRidge = 1e-10;
  require(cache.rows() >= 1, "least_squares_oracle: empty dataset");
  require_dim(cache.rows(), targets.size(), "least_squares_oracle targets");
  const auto t = static_cast<Eigen::Index>(cache.width());
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(t, t);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(t);
  for (std::size_t i = 0; i < cache.rows(); ++i) {
    const auto u = cache.units(i);
    const auto v = cache.values(i);
    for (std::size_t a = 0; a < u.size(); ++a) {
      rhs(u[a]) += v[a] * targets[i];
      for (std::size_t b = 0; b < u.size(); ++b) gram(u[a], u[b]) += v[a] * v[b];
    }
  }
  gram.diagonal().array() += kRidge;
  const Eigen::VectorXd a = gram.ldlt().solve(rhs);
  if (!a.allFinite()) throw NumericalError("least_squares_oracle: singular normal equations");
  return {a.data(), a.data() + t};
}

double hessian_spectral_norm(const FeatureCache& cache, int iterations, std::uint64_t seed) {
  require(cache.rows() >= 1, "hessian_spectral_norm: empty dataset");
  const std::size_t t = cache.width();
  Rng rng(seed);
  std::vector<double> v(t), w(t);
  for (double& x : v) x = rng.normal();
  double lambda = 0.0;
  const double scale = 2.0 / static_cast<double>(cache.rows());
  for (int it = 0; it < iterations; ++it) {
    const double len = norm2(v);
    if (len == 0.0) return 0.0;
    for (double& x : v) x /= len;
    std::fill(w.begin(), w.end(), 0.0);
    for (std::size_t i = 0; i < cache.rows(); ++i) {
      const double p = scale * cache.predict(i, v);
      const auto u = cache.units(i);
      const auto vals = cache.values(i);
      for (std::size_t k = 0; k < u.size(); ++k) w[u[k]] += p * vals[k];
    }
    lambda = dot(v, w);
    v.swap(w);
  }
  return lambda;
}

}  // namespace dsm
