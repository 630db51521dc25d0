#pragma once

#include <concepts>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "dsm/models.hpp"
#include "dsm/targets.hpp"

namespace dsm {

double mse(std::span<const double> predictions, std::span<const double> targets);
double sup_error(std::span<const double> predictions, std::span<const double> targets);

enum class OptimizerKind { Gd, Sgd, RmsProp };

std::string to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::RmsProp;
  double learning_rate = 1e-5;
  std::size_t epochs = 50;
  /// Ignored by full-batch gradient descent.
  std::size_t batch_size = 32;
  double rho = 0.9;
  double delta = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_mse = 0.0;
  std::optional<double> eval_mse;
  double wall_ms = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;

  /// epoch,train_mse,eval_mse,wall_ms; eval_mse is empty when not tracked.
  void write_csv(std::ostream& out) const;
};

/// Anything with a frozen feature map and a trainable top row.
template <class M>
concept TopLayerModel = requires(const M& cm, M& m, std::span<const double> x, ActiveFeatures& f) {
  { cm.features(x, f) };
  { m.top() } -> std::convertible_to<std::span<double>>;
  { cm.width() } -> std::convertible_to<std::size_t>;
  { cm.input_dim() } -> std::convertible_to<std::size_t>;
};

/**
 * Masked features mask(x) o phi(x) of a fixed input set, stored sparsely.
 * The bottom layer and routing never change during training, so these are
 * computed once per dataset.
 */
class FeatureCache {
 public:
  template <TopLayerModel M>
  static FeatureCache build(const M& model, const RowMatrix& inputs) {
    require_dim(model.input_dim(), inputs.cols(), "FeatureCache inputs");
    FeatureCache c;
    c.width_ = model.width();
    c.offsets_.reserve(inputs.rows() + 1);
    c.offsets_.push_back(0);
    ActiveFeatures f;
    for (std::size_t i = 0; i < inputs.rows(); ++i) {
      model.features(inputs.row(i), f);
      c.units_.insert(c.units_.end(), f.units.begin(), f.units.end());
      c.values_.insert(c.values_.end(), f.values.begin(), f.values.end());
      c.offsets_.push_back(c.units_.size());
    }
    return c;
  }

  std::size_t rows() const noexcept { return offsets_.size() - 1; }
  std::size_t width() const noexcept { return width_; }
  std::span<const std::uint32_t> units(std::size_t i) const noexcept {
    return {units_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }
  std::span<const double> values(std::size_t i) const noexcept {
    return {values_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }
  double predict(std::size_t i, std::span<const double> top) const noexcept;
  std::vector<double> predict_all(std::span<const double> top) const;

 private:
  std::size_t width_ = 0;
  std::vector<std::size_t> offsets_;
  std::vector<std::uint32_t> units_;
  std::vector<double> values_;
};

/// Mean of (g(x) - y)^2 over the listed rows.
double batch_mse(const FeatureCache& cache, std::span<const double> targets,
                 std::span<const std::size_t> batch, std::span<const double> top);

/// grad_j = mean over batch of 2 (g(x) - y) mask_j(x) phi_j(x).
std::vector<double> top_layer_gradient(const FeatureCache& cache, std::span<const double> targets,
                                       std::span<const std::size_t> batch,
                                       std::span<const double> top);

/// v <- rho v + (1 - rho) g^2; delta = -lr g / (sqrt(v) + delta_stab).
void rmsprop_step(std::span<double> v, std::span<const double> grad,
                  const OptimizerConfig& config, std::span<double> delta);

/// Optimizes `top` in place. Throws TrainingDiverged if train MSE exceeds
/// kDivergenceLimit or stops being finite.
TrainHistory train_top_layer(std::span<double> top, const FeatureCache& train,
                             std::span<const double> train_targets, const FeatureCache* eval,
                             std::span<const double> eval_targets, const OptimizerConfig& config);

inline constexpr double kDivergenceLimit = 1e6;

template <TopLayerModel M>
TrainHistory train(M& model, const Dataset& train_set, const Dataset* eval_set,
                   const OptimizerConfig& config) {
  require(train_set.size() >= 1, "train: empty training set");
  const auto train_cache = FeatureCache::build(model, train_set.inputs);
  std::optional<FeatureCache> eval_cache;
  if (eval_set != nullptr) {
    require(eval_set->size() >= 1, "train: empty evaluation set");
    eval_cache = FeatureCache::build(model, eval_set->inputs);
  }
  return train_top_layer(model.top(), train_cache, train_set.targets,
                         eval_cache ? &*eval_cache : nullptr,
                         eval_set ? std::span<const double>(eval_set->targets)
                                  : std::span<const double>(),
                         config);
}

/// Closed-form minimizer of sum (A . (mask o phi) - y)^2 via ridge-1e-10
/// normal equations.
std::vector<double> least_squares_oracle(const FeatureCache& cache,
                                         std::span<const double> targets);

template <TopLayerModel M>
std::vector<double> least_squares_oracle(const M& model, const Dataset& data) {
  return least_squares_oracle(FeatureCache::build(model, data.inputs), data.targets);
}

/// Power-iteration estimate of the largest eigenvalue of the loss Hessian
/// (2 / n) Phi^T Phi.
double hessian_spectral_norm(const FeatureCache& cache, int iterations = 200,
                             std::uint64_t seed = 0);

}  // namespace dsm
