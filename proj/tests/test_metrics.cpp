#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "dsm/metrics.hpp"

using namespace dsm;

TEST(Flops, IdealMatchesReferenceTable) {
  EXPECT_EQ(ideal_flops(1024, 8), 18432u);
  EXPECT_EQ(ideal_flops(2048, 8), 36864u);
  EXPECT_EQ(ideal_flops(4096, 8), 73728u);
  EXPECT_EQ(ideal_flops(1, 1), 4u);
}

TEST(Flops, IdealIsLinearInUnits) {
  for (std::uint64_t d : {1u, 8u, 64u}) {
    for (std::uint64_t u : {1u, 7u, 300u}) {
      EXPECT_EQ(ideal_flops(2 * u, d), 2 * ideal_flops(u, d));
      EXPECT_EQ(ideal_flops(u + 1, d) - ideal_flops(u, d), ideal_flops(1, d));
    }
  }
}

TEST(Flops, ActualCostRelations) {
  const std::uint64_t d = 8;
  for (std::uint64_t t : {16u, 256u, 4096u}) {
    EXPECT_EQ(actual_flops(CostModel::Dense, t, t, d, 0), ideal_flops(t, d));
    const auto r = topk_routing_flops(t);
    EXPECT_EQ(actual_flops(CostModel::TopK, t, t, d, r), ideal_flops(t, d) + r);
    for (std::uint64_t u : {std::uint64_t{1}, t / 4, t}) {
      EXPECT_EQ(actual_flops(CostModel::TopK, t, u, d, r), 2 * t * d + 2 * u + r);
      EXPECT_GE(actual_flops(CostModel::TopK, t, u, d, r), ideal_flops(u, d));
      EXPECT_EQ(actual_flops(CostModel::Routed, t, u, d, 5), ideal_flops(u, d) + 5);
      EXPECT_EQ(actual_flops(CostModel::Routed, t, u, d, 0), ideal_flops(u, d));
    }
  }
}

TEST(Flops, RoutingCosts) {
  // Sixteen planes (C = 8, k = 2) at d = 8.
  EXPECT_EQ(lsh_routing_flops(16, 8), 272u);
  EXPECT_EQ(lsh_routing_flops(16, 8, 3), 3 * 272u);
  EXPECT_EQ(topk_routing_flops(1024), 1024u);
  EXPECT_EQ(random_hash_routing_flops(8, 1024, 8), 1024u);
  EXPECT_EQ(random_hash_routing_flops(8, 1024, 32), 2 * 8 * 32 + 1024u);
}

TEST(CountActivated, MatchesDeclaredSparsity) {
  const DenseModel dense(4, 40, Activation::Relu, 1);
  const DsmModel topk(dense, TopKRouting{10});
  const DsmModel hashed(dense, RandomHashRouting::make(4, 40, 10, 2, 4));
  LshLearner lsh(EuclideanLsh(4, 4, 0.5, 3));
  lsh.fit(RowMatrix(1, 4, {0.1, 0.2, 0.3, 0.4}), std::vector<double>{1.0});
  Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> x(4);
    for (double& v : x) v = rng.uniform(-1, 1);
    EXPECT_EQ(count_activated(dense, x), 40u);
    EXPECT_EQ(count_activated(topk, x), 10u);
    EXPECT_EQ(count_activated(hashed, x), 10u);
    EXPECT_EQ(count_activated(lsh, x), 1u);
  }
}

TEST(MetricsCsv, HeaderIsExact) {
  std::ostringstream plain, with_error;
  write_metrics_header(plain);
  write_metrics_header(with_error, true);
  EXPECT_EQ(plain.str(),
            "model_kind,width,sparsity,activated_units,ideal_flops,actual_flops,routing_flops,"
            "train_mse,eval_mse,sup_error,fallback_count,seed,epochs,lr,wall_ms\n");
  EXPECT_EQ(with_error.str(), std::string(kMetricsColumns) + ",error\n");
}

TEST(MetricsCsv, RowHasOneFieldPerColumn) {
  MetricsRecord r;
  r.model_kind = "dsm-topk";
  r.width = 4096;
  r.sparsity = 0.25;
  r.activated_units = 1024;
  r.ideal_flops = ideal_flops(1024, 8);
  r.eval_mse = 0.5;
  r.error = "bad, \"quoted\"";
  std::ostringstream out;
  write_metrics_row(out, r);
  const auto line = out.str();
  EXPECT_EQ(std::count(line.begin(), line.end(), ','), 14);
  EXPECT_EQ(line.rfind("dsm-topk,4096,0.25,1024,18432,", 0), 0u);

  std::ostringstream failed;
  write_metrics_row(failed, r, true);
  EXPECT_NE(failed.str().find(",\"bad, \"\"quoted\"\"\"\n"), std::string::npos) << failed.str();
}

TEST(MetricsJson, CarriesEveryColumn) {
  MetricsRecord r;
  r.model_kind = "dense";
  const nlohmann::json j = r;
  std::string cols = kMetricsColumns;
  std::stringstream ss(cols);
  for (std::string c; std::getline(ss, c, ',');) EXPECT_TRUE(j.contains(c)) << c;
}
