#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "dsm/models.hpp"
#include "json.hpp"

namespace dsm {

/// Per activated unit: 2d for the bottom-row multiply-add and 2 for the top
/// layer. Reproduces the dense FLOPs column of the reference scaling table
/// (1024 units at d = 8 -> 18432).
std::uint64_t ideal_flops(std::uint64_t activated_units, std::uint64_t input_dim);

/// How a model pays for its forward pass.
enum class CostModel {
  Dense,   // every unit, no routing
  TopK,    // full B x to find the top K, top layer on K units only
  Routed,  // LSH, block or hash routing: activated rows only
};

/**
 * Dense:  t (2d + 2)
 * TopK:   2 t d + 2 u + r
 * Routed: u (2d + 2) + r
 */
std::uint64_t actual_flops(CostModel model, std::uint64_t width, std::uint64_t activated_units,
                           std::uint64_t input_dim, std::uint64_t routing_flops);

/// num_planes (2d + 1) per table: a dot product plus offset for each plane.
std::uint64_t lsh_routing_flops(std::uint64_t num_planes, std::uint64_t input_dim,
                                std::uint64_t tables = 1);
/// One comparison per unit to select the top K.
std::uint64_t topk_routing_flops(std::uint64_t width);
/// Optional projection (2 d mask_dim) plus one hash per unit.
std::uint64_t random_hash_routing_flops(std::uint64_t input_dim, std::uint64_t width,
                                        std::uint64_t mask_dim);

std::size_t count_activated(const DenseModel& model, std::span<const double> x);
std::size_t count_activated(const DsmModel& model, std::span<const double> x);
/// One bucket per table.
std::size_t count_activated(const LshLearner& model, std::span<const double> x);

struct MetricsRecord {
  std::string model_kind;
  std::uint64_t width = 0;
  double sparsity = 1.0;
  std::uint64_t activated_units = 0;
  std::uint64_t ideal_flops = 0;
  std::uint64_t actual_flops = 0;
  std::uint64_t routing_flops = 0;
  double train_mse = 0.0;
  double eval_mse = 0.0;
  double sup_error = 0.0;
  std::uint64_t fallback_count = 0;
  std::uint64_t seed = 0;
  std::uint64_t epochs = 0;
  double lr = 0.0;
  double wall_ms = 0.0;
  /// Set only for failed sweep runs.
  std::optional<std::string> error;
};

/// Exact CSV column list, without the optional trailing error column.
inline constexpr const char* kMetricsColumns =
    "model_kind,width,sparsity,activated_units,ideal_flops,actual_flops,routing_flops,"
    "train_mse,eval_mse,sup_error,fallback_count,seed,epochs,lr,wall_ms";

void write_metrics_header(std::ostream& out, bool with_error_column = false);
void write_metrics_row(std::ostream& out, const MetricsRecord& r, bool with_error_column = false);

void to_json(nlohmann::json& j, const MetricsRecord& r);

}  // namespace dsm
