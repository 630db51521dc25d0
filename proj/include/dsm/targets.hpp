#pragma once

#include <concepts>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dsm/matrix.hpp"
#include "dsm/monomials.hpp"
#include "dsm/rng.hpp"
#include "json.hpp"

namespace dsm {

class TargetFunction;

// ---------------------------------------------------------------------------
// Random polynomial

struct PolynomialTerm {
  MultiIndex exponents;
  double coefficient = 0.0;
};

/// How raw coefficients are rescaled after sampling.
enum class CoefficientScale {
  /// sum |c| = 1 / degree. Every partial derivative is then bounded by 1 on
  /// [-1, 1]^d.
  InverseDegree,
  /// sum |c| = 1.
  UnitSum,
};

struct PolynomialSpec {
  std::size_t dim = 0;
  unsigned degree = 0;
  std::vector<PolynomialTerm> terms;
  std::uint64_t seed = 0;

  double evaluate(std::span<const double> x) const;
  double coefficient_l1() const noexcept;
};

/// Samples `num_terms` distinct monomials of total degree <= degree uniformly
/// (all of them when num_terms exceeds the monomial count), draws raw
/// coefficients from U[-1, 1] and rescales them per `scale`.
PolynomialSpec gen_random_polynomial(std::size_t dim, unsigned degree, std::size_t num_terms,
                                     std::uint64_t seed,
                                     CoefficientScale scale = CoefficientScale::InverseDegree);

// ---------------------------------------------------------------------------
// Random hypercube function

/// f(x) = sum_y v_y I_y(x), I_y(x) = prod_i (1 + y_i x_i) / 2, over the 2^d
/// corners y. Corner index c encodes y with coordinate i on bit (d - 1 - i);
/// a 0 bit is +1. So for d = 2 the order is (1,1), (1,-1), (-1,1), (-1,-1).
struct HypercubeSpec {
  static constexpr std::size_t kMaxDim = 16;

  std::size_t dim = 0;
  std::vector<std::int8_t> corner_values;
  std::uint64_t seed = 0;

  std::vector<double> corner(std::size_t index) const;
  double indicator(std::size_t index, std::span<const double> x) const;
  /// Throws OutOfDomain if any |x_i| > 1.
  double evaluate(std::span<const double> x) const;
};

HypercubeSpec gen_hypercube(std::size_t dim, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Cone family (lower-bound construction)

/**
 * Signed cones on a cubic grid in k-dimensional slice coordinates. Centers
 * sit at spacing * j for j in {-J, ..., J}^k with spacing = 2 eps / L; each
 * carries +eps or -eps and decays linearly to zero at radius eps / L:
 *
 *   f(x) = sum_v sgn(s_v) * max(0, eps - L * |x - v|).
 *
 * Cone supports are the balls inscribed in the grid cells, so at most one
 * term is nonzero anywhere.
 */
struct ConeFunctionSpec {
  std::size_t intrinsic_dim = 0;
  double lipschitz = 1.0;
  double epsilon = 0.1;
  std::size_t half_count = 0;
  /// +1 / -1 per center, in row-major order over the grid indices.
  std::vector<std::int8_t> signs;
  std::uint64_t seed = 0;

  double spacing() const noexcept { return 2.0 * epsilon / lipschitz; }
  std::size_t per_axis() const noexcept { return 2 * half_count + 1; }
  std::size_t num_centers() const noexcept { return signs.size(); }
  std::vector<double> center(std::size_t index) const;
  RowMatrix centers() const;
  double center_value(std::size_t index) const noexcept { return signs[index] * epsilon; }
  double evaluate(std::span<const double> x) const;
};

/// Largest centered grid whose cells fit in [-extent, extent]^k (at least one
/// center), with independent fair signs.
ConeFunctionSpec gen_cone(std::size_t k, double lipschitz, double epsilon, double extent,
                          std::uint64_t seed);

// ---------------------------------------------------------------------------
// Fourier family (analytic lower-bound construction)

/// f(x) = sum_n eta_n eps1^alpha 2 cos(pi n . x) over n in {1..N}^k with
/// N = 1 / eps1 and eta_n = +-L / (C sqrt(k) pi).
struct FourierSpec {
  std::size_t intrinsic_dim = 0;
  std::size_t inv_eps1 = 1;
  double alpha = 1.0;
  double constant_c = 4.0;
  double lipschitz = 1.0;
  std::vector<std::int8_t> signs;
  std::uint64_t seed = 0;

  double eps1() const noexcept { return 1.0 / static_cast<double>(inv_eps1); }
  double eta_magnitude() const noexcept;
  /// Frequency multi-index of term `index` (row-major, entries in 1..N).
  std::vector<std::uint32_t> frequency(std::size_t index) const;
  double evaluate(std::span<const double> x) const;
};

/// alpha <= 0 selects the default k / 2 + 1.
FourierSpec gen_fourier(std::size_t k, std::size_t inv_eps1, double lipschitz, double constant_c,
                        double alpha, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Subspace embedding

/// x -> inner(A x) for A with k orthonormal rows in R^d.
struct SubspaceEmbedding {
  std::size_t ambient_dim = 0;
  std::size_t intrinsic_dim = 0;
  RowMatrix rows;
  std::shared_ptr<const TargetFunction> inner;
  std::uint64_t seed = 0;

  std::vector<double> project(std::span<const double> x) const;
  std::vector<double> lift(std::span<const double> coords) const;
  double evaluate(std::span<const double> x) const;
};

/// k x d matrix with orthonormal rows: Gaussian rows orthonormalized by
/// modified Gram-Schmidt, applied twice. A row whose residual collapses is
/// redrawn; after kMaxRedraws failures a NumericalError is thrown.
RowMatrix random_orthonormal_rows(std::size_t k, std::size_t d, Rng& rng);

SubspaceEmbedding gen_subspace_embedding(std::size_t d, std::size_t k, TargetFunction inner,
                                         std::uint64_t seed);

/// Draws a point uniformly from {A^T u : A^T u in [-1, 1]^d} by rejection in
/// the bounding box |u_j| <= |a_j|_1. Writes both the slice coordinates u and
/// the lifted point.
void sample_slice(const RowMatrix& rows, Rng& rng, std::span<double> coords,
                  std::span<double> point);

// ---------------------------------------------------------------------------

/// Closed set of target families. Value type; copies share the (immutable)
/// inner function of subspace embeddings.
class TargetFunction {
 public:
  using Spec = std::variant<PolynomialSpec, HypercubeSpec, SubspaceEmbedding, ConeFunctionSpec,
                            FourierSpec>;

  TargetFunction(Spec spec) : spec_(std::move(spec)) {}  // NOLINT(google-explicit-constructor)
  template <class S>
    requires std::constructible_from<Spec, S&&> && (!std::same_as<std::remove_cvref_t<S>, Spec>) &&
             (!std::same_as<std::remove_cvref_t<S>, TargetFunction>)
  TargetFunction(S&& spec) : spec_(std::forward<S>(spec)) {}  // NOLINT(google-explicit-constructor)

  double operator()(std::span<const double> x) const;
  std::size_t input_dim() const noexcept;
  /// Short family name: poly, hypercube, subspace, cone, fourier.
  std::string family() const;
  const Spec& spec() const noexcept { return spec_; }

 private:
  Spec spec_;
};

void to_json(nlohmann::json& j, const TargetFunction& f);
TargetFunction target_function_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Lipschitz estimation

using ScalarFunction = std::function<double(std::span<const double>)>;
using PointSampler = std::function<void(Rng&, std::span<double>)>;

/// Max of |f(x) - f(x')| / |x - x'| over sampled pairs. Even-numbered pairs
/// are two independent draws; odd-numbered pairs step 1e-3 from one draw
/// toward another, so they stay inside any convex sampling domain.
double estimate_lipschitz(const ScalarFunction& f, const PointSampler& sampler, std::size_t dim,
                          std::size_t num_pairs, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Datasets

enum class Distribution { UniformCube, SubspaceSlice };

std::string to_string(Distribution d);
Distribution distribution_from_string(const std::string& s);

struct Dataset {
  RowMatrix inputs;
  std::vector<double> targets;
  nlohmann::json function;
  std::uint64_t seed = 0;
  Distribution distribution = Distribution::UniformCube;

  std::size_t size() const noexcept { return targets.size(); }
  std::size_t dim() const noexcept { return inputs.cols(); }
};

/// n i.i.d. inputs with exact targets. SubspaceSlice requires `f` to be a
/// SubspaceEmbedding and samples uniformly on its slice of the cube.
Dataset sample_dataset(const TargetFunction& f, std::size_t d, std::size_t n, std::uint64_t seed,
                       Distribution distribution);

/// Sidecar path for a dataset CSV: same stem, .json extension.
std::filesystem::path sidecar_path(const std::filesystem::path& csv);

/// CSV (x1..xd,y, shortest round-trip decimals) plus JSON sidecar.
void write_dataset(const Dataset& data, const std::filesystem::path& csv);
/// Reads the CSV; the sidecar is loaded when present.
Dataset read_dataset(const std::filesystem::path& csv);

/// Shortest decimal that round-trips to the same double.
std::string format_double(double v);

}  // namespace dsm
