#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dsm/metrics.hpp"
#include "dsm/targets.hpp"
#include "dsm/training.hpp"
#include "json.hpp"

namespace dsm {

// ---------------------------------------------------------------------------
// Target construction

struct FunctionConfig {
  /// poly | hypercube | subspace-poly | cone | fourier
  std::string family = "poly";
  std::size_t d = 8;
  /// Intrinsic dimension; 0 means d. Cone and fourier are embedded in a
  /// random k-subspace when k < d.
  std::size_t k = 0;
  unsigned degree = 4;
  /// 0 keeps every monomial.
  std::size_t terms = 0;
  CoefficientScale scale = CoefficientScale::InverseDegree;
  double lipschitz = 1.0;
  double epsilon = 0.1;
  double extent = 1.0;
  std::size_t inv_eps1 = 8;
  double fourier_c = 4.0;
  double alpha = 0.0;
  std::uint64_t seed = 1;

  std::size_t intrinsic_dim() const noexcept { return k == 0 ? d : k; }
};

void to_json(nlohmann::json& j, const FunctionConfig& c);
FunctionConfig function_config_from_json(const nlohmann::json& j);

/// Validates the combination and builds the target. Throws
/// std::invalid_argument for bad combinations (e.g. hypercube with d > 16).
TargetFunction build_function(const FunctionConfig& config);

/// Slice sampling for embedded targets, cube sampling otherwise.
Distribution default_distribution(const TargetFunction& f);

// ---------------------------------------------------------------------------
// Single run

struct ModelConfig {
  /// dense | dsm | lsh | randhash
  std::string kind = "dense";
  std::size_t width = 256;
  /// Activated fraction s / t for dsm and randhash.
  double sparsity = 1.0;
  /// dsm only: topk | lsh
  std::string routing = "topk";
  Activation activation = Activation::Relu;
  /// LSH planes: per table for the lsh learner, sign planes for lsh routing.
  std::size_t planes = 16;
  /// Fixed LSH width; <= 0 requests calibration from eps / lipschitz.
  double lsh_width = 0.0;
  double eps = 0.25;
  double lipschitz = 1.0;
  std::size_t tables = 1;
  unsigned degree = 0;
  /// randhash projection size; 0 means min(d, width).
  std::size_t mask_dim = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Builds, trains (or fits), evaluates and costs one model. `seed` drives
/// every random choice of the model and optimizer.
MetricsRecord train_eval(const ModelConfig& model, const OptimizerConfig& optimizer,
                         const Dataset& train, const Dataset& test, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Sweeps

/// One grid axis block: a model kind crossed with its widths and sparsities.
struct ModelGrid {
  ModelConfig base;
  std::vector<std::size_t> widths;
  std::vector<double> sparsities;
};

struct SweepConfig {
  FunctionConfig function;
  std::size_t train_n = 1 << 13;
  std::size_t test_n = 1 << 12;
  std::vector<ModelGrid> models;
  OptimizerConfig optimizer;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::uint64_t seed = 0;
  std::size_t workers = 0;
  std::filesystem::path output;

  /// Flattened grid in row order (models, then widths, then sparsities).
  std::vector<ModelConfig> grid() const;
  void validate() const;
};

SweepConfig sweep_config_from_json(const nlohmann::json& j);
SweepConfig load_sweep_config(const std::filesystem::path& path);

struct SweepResult {
  std::vector<MetricsRecord> rows;
  std::size_t failures = 0;
};

/**
 * Runs grid x seeds on a bounded worker pool. Each trial seed gets its own
 * train/test draw shared by every grid entry; each run's model seed is
 * derive_seed(config.seed, grid index, trial index). Rows come back in grid
 * order, seed order within each grid entry, independent of scheduling.
 */
SweepResult run_sweep(const SweepConfig& config);

/// Adds an error column only when some run failed.
void write_sweep_csv(const SweepResult& result, std::ostream& out);

// ---------------------------------------------------------------------------
// Bucket geometry

struct BucketStatsConfig {
  std::size_t d = 8;
  std::size_t k = 2;
  std::size_t planes = 16;
  double width = 0.5;
  std::size_t samples = 2000;
  std::size_t trials = 10;
  std::uint64_t seed = 1;
};

/// Samples one random k-slice of [-1, 1]^d, then draws `trials` independent
/// LSH families and measures each on `samples` slice points.
nlohmann::json bucket_stats_report(const BucketStatsConfig& config);

// ---------------------------------------------------------------------------
// Plotting

struct PlotSeries {
  std::string label;
  /// Mean y per x, x ascending.
  std::vector<std::pair<double, double>> points;
};

struct PlotAxes {
  double log2_x_min = 0.0, log2_x_max = 1.0;
  double log10_y_min = 0.0, log10_y_max = 1.0;
};

/// Groups metrics rows by (model_kind, sparsity) and averages y over seeds.
/// Rows with non-positive x or y are dropped (log axes). Throws when the
/// file has no data rows or lacks a column.
std::vector<PlotSeries> load_plot_series(const std::filesystem::path& csv,
                                         const std::string& x_column,
                                         const std::string& y_column);

/// Data range in log space, padded by 5% of the span on each side.
PlotAxes plot_axes(const std::vector<PlotSeries>& series);

std::string render_svg(const std::vector<PlotSeries>& series, const std::string& x_label,
                       const std::string& y_label);

}  // namespace dsm
