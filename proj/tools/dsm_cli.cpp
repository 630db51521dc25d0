// Command-line harness: gen-data, train-eval, sweep, bucket-stats, plot.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 run failure
// (for sweeps: at least one run failed; failed rows carry an error column).

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "dsm/error.hpp"
#include "dsm/experiment.hpp"
#include "dsm/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kUsageError = 1;
constexpr int kRunFailure = 2;

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

void add_function_flags(CLI::App& cmd, dsm::FunctionConfig& f, std::string& scale) {
  cmd.add_option("--fn", f.family, "Target family")
      ->check(CLI::IsMember({"poly", "hypercube", "subspace-poly", "cone", "fourier"}))
      ->required();
  cmd.add_option("--d", f.d, "Ambient dimension")->check(CLI::PositiveNumber);
  cmd.add_option("--k", f.k, "Intrinsic dimension (subspace-poly, cone, fourier)");
  cmd.add_option("--degree", f.degree, "Polynomial degree");
  cmd.add_option("--terms", f.terms, "Number of monomials; 0 keeps all");
  cmd.add_option("--scale", scale, "Coefficient scale")
      ->check(CLI::IsMember({"inverse-degree", "unit-sum"}));
  cmd.add_option("--lipschitz", f.lipschitz, "Cone/Fourier Lipschitz constant");
  cmd.add_option("--eps", f.epsilon, "Cone height");
  cmd.add_option("--extent", f.extent, "Cone grid half-extent");
  cmd.add_option("--inv-eps1", f.inv_eps1, "Fourier frequency cutoff N");
  cmd.add_option("--fourier-c", f.fourier_c, "Fourier amplitude constant C");
  cmd.add_option("--alpha", f.alpha, "Fourier decay exponent; <= 0 uses k/2 + 1");
}

void apply_scale(dsm::FunctionConfig& f, const std::string& scale) {
  f.scale = scale == "unit-sum" ? dsm::CoefficientScale::UnitSum
                                : dsm::CoefficientScale::InverseDegree;
}

int gen_data(dsm::FunctionConfig f, const std::string& scale, std::size_t n, std::uint64_t seed,
             std::optional<std::uint64_t> fn_seed, const fs::path& out) {
  apply_scale(f, scale);
  f.seed = fn_seed.value_or(seed);
  const auto target = dsm::build_function(f);
  const auto data =
      dsm::sample_dataset(target, f.d, n, dsm::derive_seed(seed, 1), dsm::default_distribution(target));
  dsm::write_dataset(data, out);
  const auto [lo, hi] = std::minmax_element(data.targets.begin(), data.targets.end());
  std::cout << json{{"n", data.size()},
                    {"d", data.dim()},
                    {"family", target.family()},
                    {"distribution", dsm::to_string(data.distribution)},
                    {"y_min", n ? *lo : 0.0},
                    {"y_max", n ? *hi : 0.0},
                    {"csv", out.string()},
                    {"sidecar", dsm::sidecar_path(out).string()}}
                   .dump()
            << '\n';
  return 0;
}

void append_metrics(const fs::path& path, const dsm::MetricsRecord& rec) {
  const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  if (fresh) dsm::write_metrics_header(out);
  dsm::write_metrics_row(out, rec);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse-model and LSH regression experiments"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Sample a synthetic regression dataset");
  dsm::FunctionConfig gen_fn;
  std::string gen_scale = "inverse-degree";
  std::size_t gen_n = 1 << 13;
  std::uint64_t gen_seed = 1;
  std::optional<std::uint64_t> gen_fn_seed;
  fs::path gen_out;
  add_function_flags(*gen, gen_fn, gen_scale);
  gen->add_option("--n", gen_n, "Number of samples")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "Seed for the function and the inputs");
  gen->add_option("--fn-seed", gen_fn_seed, "Separate seed for the function");
  gen->add_option("--out", gen_out, "Output CSV path")->required();

  // train-eval
  auto* te = app.add_subcommand("train-eval", "Train one model and report metrics");
  dsm::ModelConfig model;
  dsm::OptimizerConfig opt;
  std::string activation = "relu", optimizer = "rmsprop";
  fs::path train_path, test_path, metrics_path;
  std::uint64_t te_seed = 1;
  bool auto_calibrate = false;
  te->add_option("--model", model.kind, "Model kind")
      ->check(CLI::IsMember({"dense", "dsm", "lsh", "randhash"}))
      ->required();
  te->add_option("--width", model.width, "Hidden width t");
  auto* sparsity_opt = te->add_option("--sparsity", model.sparsity, "Activated fraction s / t");
  auto* routing_opt = te->add_option("--routing", model.routing, "DSM routing")
                          ->check(CLI::IsMember({"topk", "lsh"}));
  te->add_option("--activation", activation, "Bottom-layer activation")
      ->check(CLI::IsMember({"identity", "relu", "unit"}));
  te->add_option("--planes", model.planes, "LSH planes per table");
  auto* width_opt = te->add_option("--lsh-width", model.lsh_width, "Fixed LSH width");
  auto* auto_opt = te->add_flag("--auto-calibrate", auto_calibrate,
                                "Calibrate the LSH width so buckets have diameter <= eps / L");
  width_opt->excludes(auto_opt);
  te->add_option("--eps", model.eps, "Target accuracy for calibration");
  te->add_option("--lipschitz", model.lipschitz, "Lipschitz bound for calibration");
  te->add_option("--tables", model.tables, "Independent LSH tables averaged");
  te->add_option("--lsh-degree", model.degree, "Per-bucket polynomial degree");
  te->add_option("--mask-dim", model.mask_dim, "Random-hash projection size; 0 = min(d, t)");
  te->add_option("--train", train_path, "Training CSV")->required()->check(CLI::ExistingFile);
  te->add_option("--test", test_path, "Test CSV")->required()->check(CLI::ExistingFile);
  te->add_option("--optimizer", optimizer, "Optimizer")
      ->check(CLI::IsMember({"gd", "sgd", "rmsprop"}));
  te->add_option("--lr", opt.learning_rate, "Learning rate");
  te->add_option("--epochs", opt.epochs, "Epochs");
  te->add_option("--batch-size", opt.batch_size, "Mini-batch size");
  te->add_option("--seed", te_seed, "Model and optimizer seed");
  te->add_option("--metrics", metrics_path, "Append the metrics row to this CSV");

  // sweep
  auto* sw = app.add_subcommand("sweep", "Run a grid of models over several seeds");
  fs::path sweep_config, sweep_out;
  std::size_t sweep_workers = 0;
  sw->add_option("config", sweep_config, "Sweep JSON")->required()->check(CLI::ExistingFile);
  sw->add_option("--out", sweep_out, "Results CSV (overrides the config)");
  sw->add_option("--workers", sweep_workers, "Worker threads (overrides the config)");

  // bucket-stats
  auto* bs = app.add_subcommand("bucket-stats", "Measure LSH bucket geometry on a k-slice");
  dsm::BucketStatsConfig stats;
  bs->add_option("--d", stats.d, "Ambient dimension")->check(CLI::PositiveNumber);
  bs->add_option("--k", stats.k, "Slice dimension")->check(CLI::PositiveNumber);
  bs->add_option("--planes", stats.planes, "Number of planes")->check(CLI::PositiveNumber);
  bs->add_option("--lsh-width", stats.width, "LSH width")->check(CLI::PositiveNumber);
  bs->add_option("--samples", stats.samples, "Sample points");
  bs->add_option("--trials", stats.trials, "Independent family draws")->check(CLI::PositiveNumber);
  bs->add_option("--seed", stats.seed, "Seed");

  // plot
  auto* pl = app.add_subcommand("plot", "Render a sweep CSV as an SVG line chart");
  fs::path plot_in, plot_out;
  std::string plot_x = "activated_units", plot_y = "eval_mse";
  pl->add_option("--in", plot_in, "Sweep CSV")->required()->check(CLI::ExistingFile);
  pl->add_option("--x", plot_x, "x column")
      ->check(CLI::IsMember({"activated_units", "width", "ideal_flops"}));
  pl->add_option("--y", plot_y, "y column")->check(CLI::IsMember({"eval_mse", "sup_error"}));
  pl->add_option("--out", plot_out, "Output SVG")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (gen->parsed()) {
      return gen_data(gen_fn, gen_scale, gen_n, gen_seed, gen_fn_seed, gen_out);
    }

    if (te->parsed()) {
      if (routing_opt->count() > 0 && model.kind != "dsm") {
        throw UsageError("--routing only applies to --model dsm");
      }
      if (sparsity_opt->count() > 0 && (model.kind == "dense" || model.kind == "lsh")) {
        throw UsageError("--sparsity does not apply to --model " + model.kind);
      }
      if (model.kind != "lsh" && (width_opt->count() > 0 || auto_calibrate)) {
        throw UsageError("--lsh-width / --auto-calibrate only apply to --model lsh");
      }
      if (model.kind == "lsh" && width_opt->count() == 0 && !auto_calibrate) {
        throw UsageError("--model lsh needs --lsh-width or --auto-calibrate");
      }
      if (auto_calibrate) model.lsh_width = 0.0;
      model.activation = dsm::activation_from_string(activation);
      opt.kind = dsm::optimizer_from_string(optimizer);
      try {
        model.validate();
        opt.validate();
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      const auto train = dsm::read_dataset(train_path);
      const auto test = dsm::read_dataset(test_path);
      const auto rec = dsm::train_eval(model, opt, train, test, te_seed);
      std::cout << json(rec).dump() << '\n';
      if (!metrics_path.empty()) append_metrics(metrics_path, rec);
      return 0;
    }

    if (sw->parsed()) {
      dsm::SweepConfig config;
      try {
        config = dsm::load_sweep_config(sweep_config);
        if (!sweep_out.empty()) config.output = sweep_out;
        if (sweep_workers > 0) config.workers = sweep_workers;
        if (config.output.empty()) throw std::invalid_argument("sweep: no output path");
        config.validate();
      } catch (const std::exception& e) {
        throw UsageError(e.what());
      }
      const auto result = dsm::run_sweep(config);
      std::ofstream out(config.output);
      if (!out) throw std::runtime_error("cannot write " + config.output.string());
      dsm::write_sweep_csv(result, out);
      std::cerr << result.rows.size() << " runs, " << result.failures << " failed -> "
                << config.output.string() << '\n';
      return result.failures > 0 ? kRunFailure : 0;
    }

    if (bs->parsed()) {
      try {
        std::cout << dsm::bucket_stats_report(stats).dump(2) << '\n';
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      return 0;
    }

    if (pl->parsed()) {
      std::string svg;
      try {
        svg = dsm::render_svg(dsm::load_plot_series(plot_in, plot_x, plot_y), plot_x, plot_y);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      std::ofstream out(plot_out);
      if (!out) throw std::runtime_error("cannot write " + plot_out.string());
      out << svg;
      return 0;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRunFailure;
  }
  return 0;
}
