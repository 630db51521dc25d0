#include "dsm/metrics.hpp"

#include "dsm/error.hpp"
#include "dsm/targets.hpp"

namespace dsm {

std::uint64_t ideal_flops(std::uint64_t activated_units, std::uint64_t input_dim) {
  return activated_units * (2 * input_dim + 2);
}

std::uint64_t actual_flops(CostModel model, std::uint64_t width, std::uint64_t activated_units,
                           std::uint64_t input_dim, std::uint64_t routing_flops) {
  require(activated_units <= width, "actual_flops: activated units exceed width");
  switch (model) {
    case CostModel::Dense: return width * (2 * input_dim + 2);
    case CostModel::TopK: return 2 * width * input_dim + 2 * activated_units + routing_flops;
    case CostModel::Routed: return activated_units * (2 * input_dim + 2) + routing_flops;
  }
  return 0;
}

std::uint64_t lsh_routing_flops(std::uint64_t num_planes, std::uint64_t input_dim,
                                std::uint64_t tables) {
  return tables * num_planes * (2 * input_dim + 1);
}

std::uint64_t topk_routing_flops(std::uint64_t width) { return width; }

std::uint64_t random_hash_routing_flops(std::uint64_t input_dim, std::uint64_t width,
                                        std::uint64_t mask_dim) {
  return (input_dim != mask_dim ? 2 * input_dim * mask_dim : 0) + width;
}

std::size_t count_activated(const DenseModel& model, std::span<const double> x) {
  require_dim(model.input_dim(), x.size(), "count_activated");
  return model.width();
}

std::size_t count_activated(const DsmModel& model, std::span<const double> x) {
  return model.route(x).size();
}

std::size_t count_activated(const LshLearner& model, std::span<const double> x) {
  require_dim(model.family().dim(), x.size(), "count_activated");
  return 1;
}

void write_metrics_header(std::ostream& out, bool with_error_column) {
  out << kMetricsColumns << (with_error_column ? ",error\n" : "\n");
}

namespace {
std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}
}  // namespace

void write_metrics_row(std::ostream& out, const MetricsRecord& r, bool with_error_column) {
  out << csv_escape(r.model_kind) << ',' << r.width << ',' << format_double(r.sparsity) << ','
      << r.activated_units << ',' << r.ideal_flops << ',' << r.actual_flops << ','
      << r.routing_flops << ',' << format_double(r.train_mse) << ','
      << format_double(r.eval_mse) << ',' << format_double(r.sup_error) << ','
      << r.fallback_count << ',' << r.seed << ',' << r.epochs << ',' << format_double(r.lr)
      << ',' << format_double(r.wall_ms);
  if (with_error_column) out << ',' << csv_escape(r.error.value_or(""));
  out << '\n';
}

void to_json(nlohmann::json& j, const MetricsRecord& r) {
  j = nlohmann::json{{"model_kind", r.model_kind},
                     {"width", r.width},
                     {"sparsity", r.sparsity},
                     {"activated_units", r.activated_units},
                     {"ideal_flops", r.ideal_flops},
                     {"actual_flops", r.actual_flops},
                     {"routing_flops", r.routing_flops},
                     {"train_mse", r.train_mse},
                     {"eval_mse", r.eval_mse},
                     {"sup_error", r.sup_error},
                     {"fallback_count", r.fallback_count},
                     {"seed", r.seed},
                     {"epochs", r.epochs},
                     {"lr", r.lr},
                     {"wall_ms", r.wall_ms}};
  if (r.error) j["error"] = *r.error;
}

}  // namespace dsm
