#pragma once

#include <atomic>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "dsm/lsh.hpp"
#include "dsm/matrix.hpp"
#include "dsm/targets.hpp"
#include "json.hpp"

namespace dsm {

/// Elementwise nonlinearity sigma applied to the bottom layer. `Unit` maps
/// every activated unit to 1, which is what k-NN simulation needs.
enum class Activation { Identity, Relu, Unit };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

/// Sorted indices of activated units.
using ActiveSet = std::vector<std::uint32_t>;

/// phi_j(x) for the activated units only; units ascending.
struct ActiveFeatures {
  std::vector<std::uint32_t> units;
  std::vector<double> values;
};

/// g(x) = A . sigma(B x) with B fixed at construction and A trainable.
class DenseModel {
 public:
  /// B has i.i.d. N(0, 1/d) entries drawn from `seed`; A starts at zero.
  DenseModel(std::size_t input_dim, std::size_t width, Activation activation,
             std::uint64_t seed);
  DenseModel(RowMatrix bottom, std::vector<double> top, Activation activation,
             std::uint64_t seed = 0);

  std::size_t input_dim() const noexcept { return bottom_.cols(); }
  std::size_t width() const noexcept { return bottom_.rows(); }
  Activation activation() const noexcept { return activation_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const RowMatrix& bottom() const noexcept { return bottom_; }
  std::span<double> top() noexcept { return top_; }
  std::span<const double> top() const noexcept { return top_; }

  double activate(double z) const noexcept;
  double pre_activation(std::size_t unit, std::span<const double> x) const noexcept {
    return dot(bottom_.row(unit), x);
  }
  /// B x for every unit.
  void pre_activations(std::span<const double> x, std::span<double> out) const;

  void features(std::span<const double> x, ActiveFeatures& out) const;
  double forward(std::span<const double> x) const;

 private:
  RowMatrix bottom_;
  std::vector<double> top_;
  Activation activation_;
  std::uint64_t seed_;
};

// ---------------------------------------------------------------------------
// Routing

/// The K largest pre-activations of B x.
struct TopKRouting {
  std::size_t k = 1;
};

/**
 * Input-hashed routing: a fixed pseudo-random K-subset of units per input,
 * uncorrelated with input geometry.
 *
 * x is first projected to mask_dim coordinates by a seeded Gaussian map when
 * d != mask_dim. A digest folds the canonical bit patterns of all projected
 * coordinates through mix64; unit j then scores
 * mix64(digest ^ mix64(bits(z[j mod mask_dim]) + (j + 1) * golden)), and the
 * K highest scores win with ties going to the lower index.
 */
struct RandomHashRouting {
  std::size_t k = 1;
  std::size_t width = 1;
  std::uint64_t hash_seed = 0;
  std::size_t mask_dim = 1;
  RowMatrix projection;  // mask_dim x d, empty when no projection is needed

  static RandomHashRouting make(std::size_t input_dim, std::size_t width, std::size_t k,
                                std::uint64_t hash_seed, std::size_t mask_dim);
};

/// Switch-style routing: the input's LSH bucket picks one of num_experts
/// contiguous blocks of expert_size units, expert = key_digest mod experts.
struct LshRouting {
  std::variant<SignLsh, EuclideanLsh> family;
  std::size_t num_experts = 1;
  std::size_t expert_size = 1;

  std::size_t expert_of(std::span<const double> x) const;
};

/// Routes x to the unit of its nearest anchor (ties to the lower index).
/// Extends the interpolation construction's mask(x_i) = e_i to all inputs.
struct NearestPointRouting {
  RowMatrix points;
};

using RoutingRule = std::variant<TopKRouting, RandomHashRouting, LshRouting, NearestPointRouting>;

std::string routing_name(const RoutingRule& r);

/// Indices of the k largest entries, ties toward the lower index, ascending.
ActiveSet topk_indices(std::span<const double> z, std::size_t k);
std::vector<std::uint8_t> to_indicator(const ActiveSet& active, std::size_t width);

std::vector<std::uint8_t> mask_topk(std::span<const double> z, std::size_t k);
ActiveSet random_hash_active(const RandomHashRouting& routing, std::span<const double> x);
std::vector<std::uint8_t> mask_random_hash(std::span<const double> x, std::size_t width,
                                           std::size_t k, std::uint64_t hash_seed,
                                           std::size_t mask_dim);
/// One unit per block: block j activates offset choices[j] (0-based).
std::vector<std::uint8_t> block_routing_mask(std::span<const std::size_t> choices,
                                             std::size_t block_size);

// ---------------------------------------------------------------------------

/// Dense core with an input-dependent s-sparse mask on the top layer:
/// g(x) = sum_j A_j mask_j(x) phi_j(x).
class DsmModel {
 public:
  DsmModel(DenseModel core, RoutingRule routing);

  struct Output {
    double value = 0.0;
    ActiveSet activated;
  };

  std::size_t input_dim() const noexcept { return core_.input_dim(); }
  std::size_t width() const noexcept { return core_.width(); }
  std::size_t sparsity() const noexcept;
  const DenseModel& core() const noexcept { return core_; }
  const RoutingRule& routing() const noexcept { return routing_; }
  std::span<double> top() noexcept { return core_.top(); }
  std::span<const double> top() const noexcept { return core_.top(); }

  ActiveSet route(std::span<const double> x) const;
  /// Top-K evaluates every row of B; the other rules touch activated rows only.
  void features(std::span<const double> x, ActiveFeatures& out) const;
  Output forward(std::span<const double> x) const;

 private:
  DenseModel core_;
  RoutingRule routing_;
};

// ---------------------------------------------------------------------------
// Simulations

/// s = 1, identity activation, A_i = f(x_i) / <b_i, x_i>, nearest-point
/// routing. Rows with |<b_i, x_i>| < kMinInner are redrawn.
DsmModel simulate_interpolation(const RowMatrix& points, std::span<const double> values,
                                std::uint64_t seed);

/// B = anchors (unit norm), A = values / k, top-k routing with unit
/// activation: g(x) is the mean of f over the k anchors with the largest
/// inner product with x.
DsmModel simulate_knn(const RowMatrix& anchors, std::span<const double> values, std::size_t k);

// ---------------------------------------------------------------------------
// LSH bucket learner

/**
 * Euclidean-LSH regression: each trained bucket predicts its payload, and a
 * query landing in an empty bucket borrows the bucket of its nearest
 * training input (exact scan). fallback_count() counts those borrowings and
 * is the only state predict() mutates.
 */
class LshLearner {
 public:
  explicit LshLearner(EuclideanLsh family, unsigned degree = 0);
  LshLearner(const LshLearner& other);
  LshLearner& operator=(const LshLearner& other);
  LshLearner(LshLearner&& other) noexcept;
  LshLearner& operator=(LshLearner&& other) noexcept;

  void fit(const RowMatrix& inputs, std::span<const double> targets);
  void fit(const Dataset& train) { fit(train.inputs, train.targets); }

  /// Throws std::logic_error when unfitted.
  double predict(std::span<const double> x) const;

  bool fitted() const noexcept { return fitted_; }
  std::uint64_t fallback_count() const noexcept { return fallbacks_.load(); }
  void reset_fallback_count() noexcept { fallbacks_.store(0); }
  const EuclideanLsh& family() const noexcept { return family_; }
  const BucketTable& table() const noexcept { return table_; }
  const RowMatrix& retained_inputs() const noexcept { return inputs_; }

  /// Restores a fitted learner (deserialization).
  static LshLearner restore(EuclideanLsh family, BucketTable table, RowMatrix inputs);

 private:
  EuclideanLsh family_;
  BucketTable table_;
  RowMatrix inputs_;
  std::vector<BucketKey> keys_;
  bool fitted_ = false;
  mutable std::atomic<std::uint64_t> fallbacks_{0};
};

/// Weighted sum of per-learner predictions.
double lsh_ensemble_predict(std::span<const LshLearner> learners, std::span<const double> weights,
                            std::span<const double> x);
/// Uniform weights 1 / s.
double lsh_ensemble_predict(std::span<const LshLearner> learners, std::span<const double> x);

struct CalibrationResult {
  double width = 0.0;
  double measured_diameter = 0.0;
  int iterations = 0;
};

/**
 * Largest width for which the family (dim, num_planes, width, seed) keeps
 * every bucket of `inputs` within `target_diameter`.
 *
 * The search starts at the data diameter, halves until the bound holds, then
 * bisects between the passing width and its failing double with whatever is
 * left of the iteration budget. Widths are probed on a schedule that depends
 * only on pass/fail outcomes, so a smaller target never yields a larger
 * width. Throws NumericalError when no tested width passes.
 */
CalibrationResult calibrate_width(std::size_t dim, std::size_t num_planes, std::uint64_t seed,
                                  const RowMatrix& inputs, double target_diameter,
                                  int max_iterations = 20);

void to_json(nlohmann::json& j, const DenseModel& m);
void to_json(nlohmann::json& j, const DsmModel& m);
void to_json(nlohmann::json& j, const LshLearner& m);
DenseModel dense_model_from_json(const nlohmann::json& j);
DsmModel dsm_model_from_json(const nlohmann::json& j);
LshLearner lsh_learner_from_json(const nlohmann::json& j);

}  // namespace dsm
