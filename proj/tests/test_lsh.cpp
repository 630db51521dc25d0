#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <set>

#include "dsm/error.hpp"
#include "dsm/lsh.hpp"
#include "dsm/rng.hpp"

using namespace dsm;

namespace {

RowMatrix random_points(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  RowMatrix m(n, d);
  for (double& v : m.data()) v = rng.uniform(-1.0, 1.0);
  return m;
}

EuclideanLsh single_plane(double a0, double a1, double offset, double width) {
  return EuclideanLsh::from_parameters(width, RowMatrix(1, 2, {a0, a1}), {offset});
}

}  // namespace

// ---------------------------------------------------------------------------
// PRNG

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    differs |= x != c.next_u64();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, UniformStaysInRange) {
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    const double v = rng.uniform(-2.0, 3.0);
    ASSERT_GE(v, -2.0);
    ASSERT_LT(v, 3.0);
  }
}

TEST(Rng, NormalMoments) {
  Rng rng(5);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.015);
}

TEST(Rng, BelowIsUnbiasedAndBounded) {
  Rng rng(9);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const auto v = rng.below(7);
    ASSERT_LT(v, 7u);
    ++counts[v];
  }
  for (int c : counts) EXPECT_NEAR(c, 10000, 400);
}

TEST(Rng, DeriveSeedIsOrderSensitive) {
  EXPECT_NE(derive_seed(1, 2), derive_seed(2, 1));
  EXPECT_NE(derive_seed(1, 2, 3), derive_seed(1, 3, 2));
  EXPECT_EQ(derive_seed(7, 8), derive_seed(7, 8));
}

TEST(Rng, CanonicalBitsFoldsSignedZeroAndNan) {
  EXPECT_EQ(canonical_bits(0.0), canonical_bits(-0.0));
  EXPECT_EQ(canonical_bits(std::numeric_limits<double>::quiet_NaN()),
            canonical_bits(-std::numeric_limits<double>::quiet_NaN()));
  EXPECT_NE(canonical_bits(1.0), canonical_bits(-1.0));
}

// ---------------------------------------------------------------------------
// Euclidean LSH

TEST(EuclideanLsh, ShapeAndOffsetRange) {
  const EuclideanLsh lsh(2, 3, 0.5, 7);
  EXPECT_EQ(lsh.directions().rows(), 3u);
  EXPECT_EQ(lsh.directions().cols(), 2u);
  ASSERT_EQ(lsh.offsets().size(), 3u);
  for (double b : lsh.offsets()) {
    EXPECT_GE(b, 0.0);
    EXPECT_LT(b, 0.5);
  }
}

TEST(EuclideanLsh, ConstructionIsDeterministic) {
  const EuclideanLsh a(5, 16, 0.25, 99), b(5, 16, 0.25, 99), c(5, 16, 0.25, 100);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.directions().data(), b.directions().data());
  EXPECT_EQ(a.offsets(), b.offsets());
  EXPECT_NE(a.directions().data(), c.directions().data());
}

TEST(EuclideanLsh, GeometryIndependentOfWidth) {
  const EuclideanLsh a(4, 8, 0.5, 3), b(4, 8, 2.0, 3);
  EXPECT_EQ(a.directions(), b.directions());
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_DOUBLE_EQ(a.offsets()[i] / 0.5, b.offsets()[i] / 2.0);
  }
}

TEST(EuclideanLsh, RejectsBadParameters) {
  EXPECT_THROW(EuclideanLsh(0, 3, 0.5, 1), std::invalid_argument);
  EXPECT_THROW(EuclideanLsh(2, 0, 0.5, 1), std::invalid_argument);
  EXPECT_THROW(EuclideanLsh(2, 3, 0.0, 1), std::invalid_argument);
  EXPECT_THROW(EuclideanLsh(2, 3, -1.0, 1), std::invalid_argument);
  EXPECT_THROW(single_plane(1, 0, 1.0, 1.0), std::invalid_argument);  // offset must be < width
}

TEST(EuclideanLsh, HashArithmetic) {
  const auto lsh = single_plane(1, 0, 0.5, 1.0);
  const std::vector<double> x1{2.3, 7.0}, x2{-1.6, 0.0};
  EXPECT_EQ(lsh.hash(x1).coords, std::vector<std::int64_t>{2});
  EXPECT_EQ(lsh.hash(x2).coords, std::vector<std::int64_t>{-2});
}

TEST(EuclideanLsh, HashRejectsBadInput) {
  const EuclideanLsh lsh(3, 4, 1.0, 1);
  const std::vector<double> short_x{1.0, 2.0};
  const std::vector<double> nan_x{1.0, std::nan(""), 0.0};
  const std::vector<double> inf_x{1.0, INFINITY, 0.0};
  EXPECT_THROW(lsh.hash(short_x), DimensionMismatch);
  EXPECT_THROW(lsh.hash(nan_x), NonFiniteInput);
  EXPECT_THROW(lsh.hash(inf_x), NonFiniteInput);
}

TEST(EuclideanLsh, CoBucketedPairsAreWithinWidthAlongEveryDirection) {
  const EuclideanLsh lsh(6, 6, 2.0, 11);
  const auto pts = random_points(600, 6, 12);
  std::vector<BucketKey> keys;
  for (std::size_t i = 0; i < pts.rows(); ++i) keys.push_back(lsh.hash(pts.row(i)));
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < pts.rows(); ++i) {
    for (std::size_t j = i + 1; j < pts.rows(); ++j) {
      if (keys[i] != keys[j]) continue;
      ++pairs;
      for (std::size_t p = 0; p < lsh.num_planes(); ++p) {
        const double proj = dot(lsh.directions().row(p), pts.row(i)) -
                            dot(lsh.directions().row(p), pts.row(j));
        EXPECT_LT(std::abs(proj), lsh.width());
      }
    }
  }
  EXPECT_GT(pairs, 0u);
}

TEST(EuclideanLsh, TranslationByLatticeVectorShiftsKey) {
  // Directions are the coordinate axes, so moving by width * m along an axis
  // moves that coordinate by exactly m.
  const double w = 0.25;
  const auto lsh =
      EuclideanLsh::from_parameters(w, RowMatrix(2, 2, {1.0, 0.0, 0.0, 1.0}), {0.1, 0.05});
  const double b[2] = {0.1, 0.05};
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    // Place x well inside its cell so adding w * m cannot round across a
    // boundary.
    std::int64_t cell[2], shift[2];
    std::vector<double> x(2), y(2);
    for (int i = 0; i < 2; ++i) {
      cell[i] = static_cast<std::int64_t>(rng.below(9)) - 4;
      shift[i] = static_cast<std::int64_t>(rng.below(7)) - 3;
      x[i] = w * (static_cast<double>(cell[i]) + rng.uniform(0.1, 0.9)) - b[i];
      y[i] = x[i] + w * static_cast<double>(shift[i]);
    }
    const auto kx = lsh.hash(x).coords;
    const auto ky = lsh.hash(y).coords;
    for (int i = 0; i < 2; ++i) {
      EXPECT_EQ(kx[i], cell[i]);
      EXPECT_EQ(ky[i] - kx[i], shift[i]);
    }
  }
}

TEST(EuclideanLsh, JsonRoundTrip) {
  const EuclideanLsh lsh(3, 5, 0.3, 17);
  const nlohmann::json j = lsh;
  const auto back = euclidean_lsh_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(back, lsh);
}

// ---------------------------------------------------------------------------
// Sign LSH

TEST(SignLsh, SignArithmeticAndBoundary) {
  const auto lsh = SignLsh::from_parameters(RowMatrix(1, 2, {1.0, 0.0}));
  const std::vector<double> a{2, 5}, b{-2, 5}, zero{0, 5};
  EXPECT_EQ(lsh.hash(a).coords, std::vector<std::int64_t>{1});
  EXPECT_EQ(lsh.hash(b).coords, std::vector<std::int64_t>{-1});
  EXPECT_EQ(lsh.hash(zero).coords, std::vector<std::int64_t>{1});
}

TEST(SignLsh, PositiveScaleInvariance) {
  const SignLsh lsh(5, 10, 4);
  Rng rng(8);
  std::vector<double> x(5), y(5);
  for (int trial = 0; trial < 500; ++trial) {
    for (double& v : x) v = rng.uniform(-1, 1);
    const double lambda = rng.uniform(0.01, 100.0);
    for (std::size_t i = 0; i < 5; ++i) y[i] = lambda * x[i];
    EXPECT_EQ(lsh.hash(x), lsh.hash(y));
  }
}

TEST(SignLsh, DeterministicAndDimensionChecked) {
  EXPECT_EQ(SignLsh(4, 6, 2), SignLsh(4, 6, 2));
  const SignLsh lsh(4, 6, 2);
  const std::vector<double> bad(3, 0.0);
  EXPECT_THROW(lsh.hash(bad), DimensionMismatch);
  EXPECT_THROW(SignLsh(0, 6, 2), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Bucket table

TEST(BucketTable, ConstantIsMeanAndCountTracks) {
  BucketTable table("test", 1, 2);
  const BucketKey k{{0}};
  const std::vector<double> x0{0, 0}, x1{2, 0};
  table.insert(k, x0, 1.0);
  EXPECT_EQ(table.non_empty(), 1u);
  table.insert(k, x1, 3.0);
  const auto* p = table.find(k);
  ASSERT_NE(p, nullptr);
  EXPECT_DOUBLE_EQ(p->constant, 2.0);
  EXPECT_EQ(p->count, 2u);
  EXPECT_DOUBLE_EQ(p->centroid[0], 1.0);
  EXPECT_DOUBLE_EQ(p->centroid[1], 0.0);
  EXPECT_TRUE(p->coefficients.empty());
}

TEST(BucketTable, RunningMeanMatchesArithmeticMean) {
  BucketTable table("test", 1, 1);
  Rng rng(2);
  const BucketKey k{{5}};
  double sum = 0;
  const int n = 1000;
  for (int i = 0; i < n; ++i) {
    const double y = rng.uniform(-10, 10);
    sum += y;
    const std::vector<double> x{rng.uniform()};
    table.insert(k, x, y);
  }
  EXPECT_NEAR(table.find(k)->constant, sum / n, 1e-12);
}

TEST(BucketTable, RejectsWrongKeyLength) {
  BucketTable table("test", 2, 1);
  const std::vector<double> x{0.0};
  EXPECT_THROW(table.insert(BucketKey{{1}}, x, 1.0), std::invalid_argument);
  EXPECT_FALSE(table.evaluate(BucketKey{{1, 2}}, x).has_value());
}

TEST(BucketTable, LinearPayloadReproducesAffineTarget) {
  BucketTable table("test", 1, 2, 1);
  Rng rng(4);
  const BucketKey k{{0}};
  for (int i = 0; i < 50; ++i) {
    const std::vector<double> x{rng.uniform(-1, 1), rng.uniform(-1, 1)};
    table.insert(k, x, 0.5 + 2.0 * x[0] - 3.0 * x[1]);
  }
  table.finalize();
  const std::vector<double> q{0.3, -0.7};
  EXPECT_NEAR(*table.evaluate(k, q), 0.5 + 0.6 + 2.1, 1e-6);
  EXPECT_EQ(table.find(k)->coefficients.size(), 3u);
}

TEST(BucketTable, JsonRoundTripPreservesEvaluation) {
  BucketTable table("fam", 1, 2, 1);
  Rng rng(6);
  for (int i = 0; i < 40; ++i) {
    const std::vector<double> x{rng.uniform(-1, 1), rng.uniform(-1, 1)};
    table.insert(BucketKey{{static_cast<std::int64_t>(i % 3)}}, x, x[0] * x[1]);
  }
  table.finalize();
  const nlohmann::json j = table;
  const auto back = bucket_table_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(back.non_empty(), 3u);
  const std::vector<double> q{0.1, 0.2};
  for (std::int64_t b = 0; b < 3; ++b) {
    EXPECT_EQ(*back.evaluate(BucketKey{{b}}, q), *table.evaluate(BucketKey{{b}}, q));
  }
}

TEST(BucketKey, JsonIsIntegerArray) {
  const nlohmann::json j = BucketKey{{3, -1, 0}};
  EXPECT_EQ(j.dump(), "[3,-1,0]");
  EXPECT_EQ(j.get<BucketKey>(), (BucketKey{{3, -1, 0}}));
}

// ---------------------------------------------------------------------------
// Bucket statistics

TEST(BucketStats, IdenticalPointsShareOneBucketOfZeroDiameter) {
  const EuclideanLsh lsh(3, 4, 0.5, 1);
  const RowMatrix pts(2, 3, {0.1, 0.2, 0.3, 0.1, 0.2, 0.3});
  const auto s = bucket_stats(lsh, pts);
  EXPECT_EQ(s.non_empty_count, 1u);
  EXPECT_EQ(s.max_diameter, 0.0);
  EXPECT_EQ(s.sample_size, 2u);
}

TEST(BucketStats, MatchesBruteForceGrouping) {
  const EuclideanLsh lsh(4, 6, 0.8, 21);
  const auto pts = random_points(300, 4, 22);
  const auto s = bucket_stats(lsh, pts);

  std::set<BucketKey> keys;
  double max_d = 0.0;
  for (std::size_t i = 0; i < pts.rows(); ++i) {
    const auto ki = lsh.hash(pts.row(i));
    keys.insert(ki);
    for (std::size_t j = i + 1; j < pts.rows(); ++j) {
      if (lsh.hash(pts.row(j)) == ki) max_d = std::max(max_d, distance(pts.row(i), pts.row(j)));
    }
  }
  EXPECT_EQ(s.non_empty_count, keys.size());
  EXPECT_DOUBLE_EQ(s.max_diameter, max_d);
  EXPECT_EQ(s.diameters.size(), keys.size());
  EXPECT_LE(s.non_empty_count, s.sample_size);
}

TEST(BucketStats, NeedsTwoPoints) {
  const EuclideanLsh lsh(2, 2, 0.5, 1);
  EXPECT_THROW(bucket_stats(lsh, RowMatrix(1, 2)), std::invalid_argument);
}

TEST(BucketStats, JsonShape) {
  BucketStats s;
  s.non_empty_count = 3;
  s.max_diameter = 0.5;
  s.sample_size = 10;
  const nlohmann::json j = s;
  EXPECT_EQ(j.at("non_empty"), 3);
  EXPECT_EQ(j.at("max_diameter"), 0.5);
  EXPECT_EQ(j.at("sample_size"), 10);
}
