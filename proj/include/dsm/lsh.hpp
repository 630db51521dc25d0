#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dsm/matrix.hpp"
#include "dsm/monomials.hpp"
#include "json.hpp"

namespace dsm {

/// Bucket index: one integer per hash function. Sign families use +1 / -1.
struct BucketKey {
  std::vector<std::int64_t> coords;

  auto operator<=>(const BucketKey&) const = default;
  bool operator==(const BucketKey&) const = default;
};

struct BucketKeyHash {
  std::size_t operator()(const BucketKey& key) const noexcept;
};

/// 64-bit digest of a key, stable across runs and platforms.
std::uint64_t key_digest(const BucketKey& key) noexcept;

/**
 * Euclidean lattice LSH: h_i(x) = floor((a_i . x + b_i) / width), with a_i
 * standard normal and b_i uniform on [0, width).
 *
 * Parameters are a pure function of (dim, num_planes, width, seed): the
 * directions are drawn first, row by row, and the offsets after them as
 * width * u_i. The unit offsets u_i therefore do not depend on width, which
 * keeps a family's geometry fixed while calibration rescales it.
 */
class EuclideanLsh {
 public:
  EuclideanLsh(std::size_t dim, std::size_t num_planes, double width, std::uint64_t seed);

  /// Builds a family from explicit parameters (tests, deserialization).
  static EuclideanLsh from_parameters(double width, RowMatrix directions,
                                      std::vector<double> offsets, std::uint64_t seed = 0);

  std::size_t dim() const noexcept { return directions_.cols(); }
  std::size_t num_planes() const noexcept { return directions_.rows(); }
  double width() const noexcept { return width_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const RowMatrix& directions() const noexcept { return directions_; }
  const std::vector<double>& offsets() const noexcept { return offsets_; }

  /// Throws DimensionMismatch or NonFiniteInput.
  BucketKey hash(std::span<const double> x) const;

  /// Identifier tying bucket tables to the family that produced their keys.
  std::string family_id() const;

  bool operator==(const EuclideanLsh&) const = default;

 private:
  EuclideanLsh() = default;

  RowMatrix directions_;
  std::vector<double> offsets_;
  double width_ = 0.0;
  std::uint64_t seed_ = 0;
};

/// Hyperplane sign LSH: z_i(x) = +1 if a_i . x >= 0 else -1.
class SignLsh {
 public:
  SignLsh(std::size_t dim, std::size_t num_planes, std::uint64_t seed);
  static SignLsh from_parameters(RowMatrix directions, std::uint64_t seed = 0);

  std::size_t dim() const noexcept { return directions_.cols(); }
  std::size_t num_planes() const noexcept { return directions_.rows(); }
  std::uint64_t seed() const noexcept { return seed_; }
  const RowMatrix& directions() const noexcept { return directions_; }

  BucketKey hash(std::span<const double> x) const;
  std::string family_id() const;

  bool operator==(const SignLsh&) const = default;

 private:
  SignLsh() = default;

  RowMatrix directions_;
  std::uint64_t seed_ = 0;
};

/// Learned content of one bucket.
struct BucketPayload {
  /// Running mean of targets; the whole payload when degree == 0.
  double constant = 0.0;
  /// Ridge least-squares coefficients over monomials of (x - centroid) up to
  /// the table degree. Empty when degree == 0.
  std::vector<double> coefficients;
  std::size_t count = 0;
  std::vector<double> centroid;
};

/**
 * Map from bucket key to payload. Degree-0 tables keep running means and are
 * usable immediately; higher degrees keep the bucket's samples and need
 * finalize() before evaluation.
 */
class BucketTable {
 public:
  BucketTable(std::string family_id, std::size_t key_length, std::size_t dim,
              unsigned degree = 0);

  void insert(const BucketKey& key, std::span<const double> x, double y);

  /// Fits per-bucket polynomials for degree >= 1. Idempotent.
  void finalize();

  const BucketPayload* find(const BucketKey& key) const;

  /// Payload evaluated at x, or nullopt for an empty bucket.
  std::optional<double> evaluate(const BucketKey& key, std::span<const double> x) const;

  std::size_t non_empty() const noexcept { return entries_.size(); }
  unsigned degree() const noexcept { return degree_; }
  std::size_t key_length() const noexcept { return key_length_; }
  std::size_t dim() const noexcept { return dim_; }
  const std::string& family_id() const noexcept { return family_id_; }
  const std::unordered_map<BucketKey, BucketPayload, BucketKeyHash>& entries() const noexcept {
    return entries_;
  }

  /// Restores a fitted entry (deserialization).
  void restore(BucketKey key, BucketPayload payload);

  static constexpr double kRidge = 1e-8;

 private:
  struct Samples {
    RowMatrix inputs;
    std::vector<double> targets;
  };

  std::string family_id_;
  std::size_t key_length_;
  std::size_t dim_;
  unsigned degree_;
  std::vector<MultiIndex> monomials_;
  std::unordered_map<BucketKey, BucketPayload, BucketKeyHash> entries_;
  std::unordered_map<BucketKey, Samples, BucketKeyHash> samples_;
  bool dirty_ = false;
};

/// Bucket geometry over a point sample: how many buckets are hit and how wide
/// each one is.
struct BucketStats {
  std::size_t non_empty_count = 0;
  double max_diameter = 0.0;
  std::vector<double> diameters;
  std::size_t sample_size = 0;
};

/// Groups `points` (one per row) by key and measures each group's exact
/// diameter by all-pairs distances. Requires at least two points.
BucketStats bucket_stats(const EuclideanLsh& lsh, const RowMatrix& points);

void to_json(nlohmann::json& j, const BucketKey& key);
void from_json(const nlohmann::json& j, BucketKey& key);
void to_json(nlohmann::json& j, const BucketStats& stats);
void to_json(nlohmann::json& j, const EuclideanLsh& lsh);
EuclideanLsh euclidean_lsh_from_json(const nlohmann::json& j);
void to_json(nlohmann::json& j, const SignLsh& lsh);
SignLsh sign_lsh_from_json(const nlohmann::json& j);
void to_json(nlohmann::json& j, const BucketTable& table);
BucketTable bucket_table_from_json(const nlohmann::json& j);

}  // namespace dsm
