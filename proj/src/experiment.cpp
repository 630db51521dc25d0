#include "dsm/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "dsm/error.hpp"
#include "dsm/rng.hpp"

namespace dsm {

using nlohmann::json;

namespace {

constexpr std::uint64_t kTrainStream = 0x747261696eULL;
constexpr std::uint64_t kTestStream = 0x74657374ULL;
constexpr std::uint64_t kModelStream = 0x6d6f64656cULL;
constexpr std::uint64_t kOptimizerStream = 0x6f7074ULL;

std::string scale_name(CoefficientScale s) {
  return s == CoefficientScale::UnitSum ? "unit-sum" : "inverse-degree";
}

CoefficientScale scale_from_string(const std::string& s) {
  if (s == "inverse-degree") return CoefficientScale::InverseDegree;
  if (s == "unit-sum") return CoefficientScale::UnitSum;
  throw std::invalid_argument("unknown coefficient scale: " + s);
}

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

}  // namespace

// ---------------------------------------------------------------------------
// Target construction

void to_json(json& j, const FunctionConfig& c) {
  j = json{{"family", c.family},       {"d", c.d},
           {"k", c.k},                 {"degree", c.degree},
           {"terms", c.terms},         {"scale", scale_name(c.scale)},
           {"lipschitz", c.lipschitz}, {"epsilon", c.epsilon},
           {"extent", c.extent},       {"inv_eps1", c.inv_eps1},
           {"fourier_c", c.fourier_c}, {"alpha", c.alpha},
           {"seed", c.seed}};
}

FunctionConfig function_config_from_json(const json& j) {
  FunctionConfig c;
  read_opt(j, "family", c.family);
  read_opt(j, "d", c.d);
  read_opt(j, "k", c.k);
  read_opt(j, "degree", c.degree);
  read_opt(j, "terms", c.terms);
  if (auto it = j.find("scale"); it != j.end()) c.scale = scale_from_string(it->get<std::string>());
  read_opt(j, "lipschitz", c.lipschitz);
  read_opt(j, "epsilon", c.epsilon);
  read_opt(j, "extent", c.extent);
  read_opt(j, "inv_eps1", c.inv_eps1);
  read_opt(j, "fourier_c", c.fourier_c);
  read_opt(j, "alpha", c.alpha);
  read_opt(j, "seed", c.seed);
  return c;
}

TargetFunction build_function(const FunctionConfig& c) {
  require(c.d >= 1, "function: d must be >= 1");
  const std::size_t k = c.intrinsic_dim();
  require(k <= c.d, "function: k must not exceed d");
  const auto inner_seed = derive_seed(c.seed, 1);

  if (c.family == "poly") {
    require(c.k == 0 || c.k == c.d, "function: poly takes no k; use subspace-poly");
    return gen_random_polynomial(c.d, c.degree, c.terms == 0 ? SIZE_MAX : c.terms, c.seed,
                                 c.scale);
  }
  if (c.family == "hypercube") {
    require(c.d <= HypercubeSpec::kMaxDim, "function: hypercube requires d <= 16");
    require(c.k == 0 || c.k == c.d, "function: hypercube takes no k");
    return gen_hypercube(c.d, c.seed);
  }

  TargetFunction inner = [&]() -> TargetFunction {
    if (c.family == "subspace-poly") {
      require(c.k >= 1, "function: subspace-poly requires k >= 1");
      return gen_random_polynomial(k, c.degree, c.terms == 0 ? SIZE_MAX : c.terms, inner_seed,
                                   c.scale);
    }
    if (c.family == "cone") {
      return gen_cone(k, c.lipschitz, c.epsilon, c.extent, inner_seed);
    }
    if (c.family == "fourier") {
      return gen_fourier(k, c.inv_eps1, c.lipschitz, c.fourier_c, c.alpha, inner_seed);
    }
    throw std::invalid_argument("unknown function family: " + c.family);
  }();
  if (k == c.d && c.family != "subspace-poly") return inner;
  return gen_subspace_embedding(c.d, k, std::move(inner), c.seed);
}

Distribution default_distribution(const TargetFunction& f) {
  return std::holds_alternative<SubspaceEmbedding>(f.spec()) ? Distribution::SubspaceSlice
                                                              : Distribution::UniformCube;
}

// ---------------------------------------------------------------------------
// Single run

void ModelConfig::validate() const {
  require(kind == "dense" || kind == "dsm" || kind == "lsh" || kind == "randhash",
          "model: unknown kind '" + kind + "'");
  if (kind != "lsh") require(width >= 1, "model: width must be >= 1");
  require(sparsity > 0.0 && sparsity <= 1.0, "model: sparsity must lie in (0, 1]");
  if (kind == "dense") require(sparsity == 1.0, "model: dense takes no sparsity");
  if (kind == "dsm") {
    require(routing == "topk" || routing == "lsh", "model: dsm routing must be topk or lsh");
  }
  if (kind == "lsh" || (kind == "dsm" && routing == "lsh")) {
    require(planes >= 1, "model: planes must be >= 1");
  }
  if (kind == "lsh") {
    require(tables >= 1, "model: tables must be >= 1");
    require(lsh_width > 0.0 || (eps > 0.0 && lipschitz > 0.0),
            "model: calibration needs positive eps and lipschitz");
  }
}

void to_json(json& j, const ModelConfig& c) {
  j = json{{"kind", c.kind},
           {"width", c.width},
           {"sparsity", c.sparsity},
           {"routing", c.routing},
           {"activation", to_string(c.activation)},
           {"planes", c.planes},
           {"lsh_width", c.lsh_width},
           {"eps", c.eps},
           {"lipschitz", c.lipschitz},
           {"tables", c.tables},
           {"degree", c.degree},
           {"mask_dim", c.mask_dim}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  read_opt(j, "kind", c.kind);
  read_opt(j, "width", c.width);
  read_opt(j, "sparsity", c.sparsity);
  read_opt(j, "routing", c.routing);
  if (auto it = j.find("activation"); it != j.end()) {
    c.activation = activation_from_string(it->get<std::string>());
  }
  read_opt(j, "planes", c.planes);
  read_opt(j, "lsh_width", c.lsh_width);
  read_opt(j, "eps", c.eps);
  read_opt(j, "lipschitz", c.lipschitz);
  read_opt(j, "tables", c.tables);
  read_opt(j, "degree", c.degree);
  read_opt(j, "mask_dim", c.mask_dim);
  return c;
}

namespace {

std::size_t active_count(std::size_t width, double sparsity) {
  const auto k = static_cast<std::size_t>(std::llround(sparsity * static_cast<double>(width)));
  return std::clamp<std::size_t>(k, 1, width);
}

template <class M>
void train_and_score(M& model, const OptimizerConfig& optimizer, const Dataset& train,
                     const Dataset& test, MetricsRecord& rec) {
  const auto train_cache = FeatureCache::build(model, train.inputs);
  const auto history =
      train_top_layer(model.top(), train_cache, train.targets, nullptr, {}, optimizer);
  rec.train_mse = history.epochs.back().train_mse;
  const auto predictions = FeatureCache::build(model, test.inputs).predict_all(model.top());
  rec.eval_mse = mse(predictions, test.targets);
  rec.sup_error = sup_error(predictions, test.targets);
  rec.epochs = optimizer.epochs;
  rec.lr = optimizer.learning_rate;
}

void run_lsh(const ModelConfig& c, const Dataset& train, const Dataset& test, std::uint64_t seed,
             MetricsRecord& rec) {
  const std::size_t d = train.dim();
  std::vector<LshLearner> learners;
  learners.reserve(c.tables);
  std::uint64_t buckets = 0;
  for (std::size_t i = 0; i < c.tables; ++i) {
    const auto family_seed = derive_seed(seed, i);
    double width = c.lsh_width;
    if (width <= 0.0) {
      width = calibrate_width(d, c.planes, family_seed, train.inputs, c.eps / c.lipschitz).width;
    }
    LshLearner learner(EuclideanLsh(d, c.planes, width, family_seed), c.degree);
    learner.fit(train);
    buckets += learner.table().non_empty();
    learners.push_back(std::move(learner));
  }
  auto predict_all = [&](const Dataset& data) {
    std::vector<double> out(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      out[i] = lsh_ensemble_predict(learners, data.inputs.row(i));
    }
    return out;
  };
  rec.train_mse = mse(predict_all(train), train.targets);
  for (auto& l : learners) l.reset_fallback_count();
  const auto predictions = predict_all(test);
  rec.eval_mse = mse(predictions, test.targets);
  rec.sup_error = sup_error(predictions, test.targets);
  for (const auto& l : learners) rec.fallback_count += l.fallback_count();

  // One bucket per table is read; a degree-D payload costs two FLOPs per
  // coefficient.
  const std::uint64_t coefficients = monomial_count(d, c.degree);
  rec.width = buckets;
  rec.activated_units = c.tables;
  rec.sparsity = buckets == 0 ? 1.0 : static_cast<double>(c.tables) / static_cast<double>(buckets);
  rec.routing_flops = lsh_routing_flops(c.planes, d, c.tables);
  rec.ideal_flops = ideal_flops(c.tables, d);
  rec.actual_flops = rec.routing_flops + c.tables * 2 * coefficients;
}

}  // namespace

MetricsRecord train_eval(const ModelConfig& c, const OptimizerConfig& optimizer_in,
                         const Dataset& train, const Dataset& test, std::uint64_t seed) {
  c.validate();
  require(train.size() >= 1 && test.size() >= 1, "train_eval: empty dataset");
  require_dim(train.dim(), test.dim(), "train_eval test inputs");
  const auto start = std::chrono::steady_clock::now();

  const std::size_t d = train.dim();
  const auto model_seed = derive_seed(seed, kModelStream);
  OptimizerConfig optimizer = optimizer_in;
  optimizer.seed = derive_seed(seed, kOptimizerStream);

  MetricsRecord rec;
  rec.model_kind = c.kind == "dsm" ? "dsm-" + c.routing : c.kind;
  rec.seed = seed;

  if (c.kind == "lsh") {
    run_lsh(c, train, test, model_seed, rec);
  } else {
    const std::size_t t = c.width;
    DenseModel core(d, t, c.activation, model_seed);
    rec.width = t;
    if (c.kind == "dense") {
      rec.sparsity = 1.0;
      rec.activated_units = t;
      rec.routing_flops = 0;
      rec.actual_flops = actual_flops(CostModel::Dense, t, t, d, 0);
      train_and_score(core, optimizer, train, test, rec);
    } else {
      const std::size_t k = active_count(t, c.sparsity);
      const auto routing_seed = derive_seed(model_seed, 0x726f757465ULL);
      RoutingRule routing = TopKRouting{k};
      CostModel cost = CostModel::Routed;
      if (c.kind == "randhash") {
        const std::size_t mask_dim = c.mask_dim == 0 ? std::min(d, t) : c.mask_dim;
        routing = RandomHashRouting::make(d, t, k, routing_seed, mask_dim);
        rec.routing_flops = random_hash_routing_flops(d, t, mask_dim);
      } else if (c.routing == "topk") {
        cost = CostModel::TopK;
        rec.routing_flops = topk_routing_flops(t);
      } else {
        require(t % k == 0, "model: lsh routing needs width divisible by the active count");
        routing = LshRouting{SignLsh(d, c.planes, routing_seed), t / k, k};
        rec.routing_flops = lsh_routing_flops(c.planes, d);
      }
      DsmModel model(std::move(core), std::move(routing));
      rec.sparsity = static_cast<double>(k) / static_cast<double>(t);
      rec.activated_units = k;
      rec.actual_flops = actual_flops(cost, t, k, d, rec.routing_flops);
      train_and_score(model, optimizer, train, test, rec);
    }
    rec.ideal_flops = ideal_flops(rec.activated_units, d);
  }
  rec.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

// ---------------------------------------------------------------------------
// Sweeps

std::vector<ModelConfig> SweepConfig::grid() const {
  std::vector<ModelConfig> out;
  for (const auto& g : models) {
    const std::vector<std::size_t> widths =
        g.widths.empty() ? std::vector<std::size_t>{g.base.width} : g.widths;
    const std::vector<double> sparsities =
        g.sparsities.empty() ? std::vector<double>{g.base.sparsity} : g.sparsities;
    for (std::size_t w : widths) {
      for (double s : sparsities) {
        ModelConfig c = g.base;
        c.width = w;
        c.sparsity = s;
        out.push_back(std::move(c));
      }
    }
  }
  return out;
}

void SweepConfig::validate() const {
  require(train_n >= 1 && test_n >= 1, "sweep: dataset sizes must be >= 1");
  require(!models.empty(), "sweep: empty model grid");
  require(!seeds.empty(), "sweep: no trial seeds");
  auto sorted = seeds;
  std::sort(sorted.begin(), sorted.end());
  require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(),
          "sweep: trial seeds must be distinct");
  for (const auto& c : grid()) c.validate();
  optimizer.validate();
  (void)build_function(function);
}

SweepConfig sweep_config_from_json(const json& j) {
  SweepConfig c;
  if (auto it = j.find("function"); it != j.end()) c.function = function_config_from_json(*it);
  read_opt(j, "train_n", c.train_n);
  read_opt(j, "test_n", c.test_n);
  for (const auto& m : j.at("models")) {
    ModelGrid g;
    g.base = model_config_from_json(m);
    read_opt(m, "widths", g.widths);
    read_opt(m, "sparsities", g.sparsities);
    c.models.push_back(std::move(g));
  }
  if (auto it = j.find("optimizer"); it != j.end()) {
    const auto& o = *it;
    if (auto k = o.find("kind"); k != o.end()) c.optimizer.kind = optimizer_from_string(*k);
    read_opt(o, "lr", c.optimizer.learning_rate);
    read_opt(o, "epochs", c.optimizer.epochs);
    read_opt(o, "batch_size", c.optimizer.batch_size);
    read_opt(o, "rho", c.optimizer.rho);
    read_opt(o, "delta", c.optimizer.delta);
  }
  read_opt(j, "seeds", c.seeds);
  read_opt(j, "seed", c.seed);
  read_opt(j, "workers", c.workers);
  if (auto it = j.find("output"); it != j.end()) c.output = it->get<std::string>();
  return c;
}

SweepConfig load_sweep_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open sweep config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument("sweep config " + path.string() + ": " + e.what());
  }
  return sweep_config_from_json(j);
}

SweepResult run_sweep(const SweepConfig& config) {
  config.validate();
  const auto grid = config.grid();
  const auto f = build_function(config.function);
  const auto dist = default_distribution(f);
  const std::size_t d = config.function.d;
  const std::size_t trials = config.seeds.size();

  // Datasets are drawn up front, one train/test pair per trial seed.
  std::vector<Dataset> train_sets, test_sets;
  for (std::uint64_t s : config.seeds) {
    train_sets.push_back(sample_dataset(f, d, config.train_n, derive_seed(s, kTrainStream), dist));
    test_sets.push_back(sample_dataset(f, d, config.test_n, derive_seed(s, kTestStream), dist));
  }

  const std::size_t total = grid.size() * trials;
  SweepResult result;
  result.rows.resize(total);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t job = next++; job < total; job = next++) {
      const std::size_t g = job / trials;
      const std::size_t t = job % trials;
      const auto run_seed = derive_seed(config.seed, g, t);
      MetricsRecord rec;
      try {
        rec = train_eval(grid[g], config.optimizer, train_sets[t], test_sets[t], run_seed);
      } catch (const std::exception& e) {
        rec = MetricsRecord{};
        rec.model_kind = grid[g].kind == "dsm" ? "dsm-" + grid[g].routing : grid[g].kind;
        rec.width = grid[g].width;
        rec.sparsity = grid[g].sparsity;
        rec.epochs = config.optimizer.epochs;
        rec.lr = config.optimizer.learning_rate;
        rec.error = e.what();
      }
      rec.seed = config.seeds[t];
      result.rows[job] = std::move(rec);
    }
  };

  std::size_t workers = config.workers;
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, total);
  std::vector<std::jthread> pool;
  for (std::size_t i = 1; i < workers; ++i) pool.emplace_back(worker);
  worker();
  pool.clear();

  result.failures = static_cast<std::size_t>(std::count_if(
      result.rows.begin(), result.rows.end(), [](const auto& r) { return r.error.has_value(); }));
  return result;
}

void write_sweep_csv(const SweepResult& result, std::ostream& out) {
  const bool with_error = result.failures > 0;
  write_metrics_header(out, with_error);
  for (const auto& r : result.rows) write_metrics_row(out, r, with_error);
}

// ---------------------------------------------------------------------------
// Bucket geometry

json bucket_stats_report(const BucketStatsConfig& c) {
  require(c.d >= 1, "bucket-stats: d must be >= 1");
  require(c.k >= 1 && c.k <= c.d, "bucket-stats: k must lie in [1, d]");
  require(c.planes >= 1, "bucket-stats: planes must be >= 1");
  require(c.width > 0.0, "bucket-stats: width must be positive");
  require(c.samples >= 2, "bucket-stats: need at least 2 samples");
  require(c.trials >= 1, "bucket-stats: trials must be >= 1");

  Rng rng(derive_seed(c.seed, 0));
  RowMatrix points(c.samples, c.d);
  if (c.k == c.d) {
    for (double& v : points.data()) v = rng.uniform(-1.0, 1.0);
  } else {
    const RowMatrix rows = random_orthonormal_rows(c.k, c.d, rng);
    std::vector<double> coords(c.k);
    for (std::size_t i = 0; i < c.samples; ++i) {
      sample_slice(rows, rng, coords, points.row(i));
    }
  }

  json trials = json::array();
  std::size_t passes = 0;
  double total_non_empty = 0.0;
  for (std::size_t t = 0; t < c.trials; ++t) {
    const auto family_seed = derive_seed(c.seed, t + 1);
    const EuclideanLsh lsh(c.d, c.planes, c.width, family_seed);
    const auto stats = bucket_stats(lsh, points);
    const bool pass = stats.max_diameter <= c.width;
    passes += pass ? 1 : 0;
    total_non_empty += static_cast<double>(stats.non_empty_count);
    trials.push_back({{"seed", family_seed},
                      {"non_empty", stats.non_empty_count},
                      {"max_diameter", stats.max_diameter},
                      {"diameter_pass", pass}});
  }
  return json{{"d", c.d},
              {"k", c.k},
              {"planes", c.planes},
              {"lsh_width", c.width},
              {"samples", c.samples},
              {"seed", c.seed},
              {"trials", trials},
              {"mean_non_empty", total_non_empty / static_cast<double>(c.trials)},
              {"diameter_pass_fraction",
               static_cast<double>(passes) / static_cast<double>(c.trials)}};
}

// ---------------------------------------------------------------------------
// Plotting

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        field += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else if (ch != '\r') {
      field += ch;
    }
  }
  out.push_back(std::move(field));
  return out;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace

std::vector<PlotSeries> load_plot_series(const std::filesystem::path& csv,
                                         const std::string& x_column,
                                         const std::string& y_column) {
  std::ifstream in(csv);
  if (!in) throw std::invalid_argument("cannot open " + csv.string());
  std::string line;
  if (!std::getline(in, line) || line.empty()) {
    throw std::invalid_argument(csv.string() + ": empty CSV");
  }
  const auto header = split_csv_line(line);
  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::invalid_argument(csv.string() + ": missing column " + name);
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t kind_col = column("model_kind");
  const std::size_t sparsity_col = column("sparsity");
  const std::size_t x_col = column(x_column);
  const std::size_t y_col = column(y_column);
  const auto error_it = std::find(header.begin(), header.end(), "error");

  // (kind, sparsity) -> x -> (sum y, count)
  std::map<std::pair<std::string, double>, std::map<double, std::pair<double, int>>> groups;
  std::size_t data_rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++data_rows;
    const auto fields = split_csv_line(line);
    if (fields.size() < header.size()) {
      throw std::invalid_argument(csv.string() + ": short row");
    }
    if (error_it != header.end() && !fields[error_it - header.begin()].empty()) continue;
    const double x = std::stod(fields[x_col]);
    const double y = std::stod(fields[y_col]);
    if (!(x > 0.0) || !(y > 0.0) || !std::isfinite(x) || !std::isfinite(y)) continue;
    auto& cell = groups[{fields[kind_col], std::stod(fields[sparsity_col])}][x];
    cell.first += y;
    cell.second += 1;
  }
  if (data_rows == 0) throw std::invalid_argument(csv.string() + ": no data rows");

  std::vector<PlotSeries> series;
  for (const auto& [key, xs] : groups) {
    PlotSeries s;
    s.label = key.first + " s=" + format_double(key.second);
    for (const auto& [x, acc] : xs) s.points.emplace_back(x, acc.first / acc.second);
    series.push_back(std::move(s));
  }
  if (series.empty()) throw std::invalid_argument(csv.string() + ": no plottable rows");
  return series;
}

PlotAxes plot_axes(const std::vector<PlotSeries>& series) {
  double x_lo = INFINITY, x_hi = -INFINITY, y_lo = INFINITY, y_hi = -INFINITY;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      x_lo = std::min(x_lo, std::log2(x));
      x_hi = std::max(x_hi, std::log2(x));
      y_lo = std::min(y_lo, std::log10(y));
      y_hi = std::max(y_hi, std::log10(y));
    }
  }
  require(std::isfinite(x_lo) && std::isfinite(y_lo), "plot: no data points");
  auto pad = [](double& lo, double& hi) {
    const double span = hi - lo;
    const double margin = span > 0.0 ? 0.05 * span : 0.5;
    lo -= margin;
    hi += margin;
  };
  pad(x_lo, x_hi);
  pad(y_lo, y_hi);
  return {x_lo, x_hi, y_lo, y_hi};
}

std::string render_svg(const std::vector<PlotSeries>& series, const std::string& x_label,
                       const std::string& y_label) {
  static constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                            "#9467bd", "#8c564b", "#e377c2", "#17becf"};
  constexpr double kWidth = 720, kHeight = 480;
  constexpr double kLeft = 80, kRight = 200, kTop = 30, kBottom = 60;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  const PlotAxes axes = plot_axes(series);

  auto px = [&](double x) {
    return kLeft + (std::log2(x) - axes.log2_x_min) / (axes.log2_x_max - axes.log2_x_min) * plot_w;
  };
  auto py = [&](double y) {
    return kTop + plot_h -
           (std::log10(y) - axes.log10_y_min) / (axes.log10_y_max - axes.log10_y_min) * plot_h;
  };

  std::ostringstream svg;
  svg.precision(6);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << plot_w << "\" height=\""
      << plot_h << "\" fill=\"none\" stroke=\"black\"/>\n";

  for (int e = static_cast<int>(std::ceil(axes.log2_x_min));
       e <= static_cast<int>(std::floor(axes.log2_x_max)); ++e) {
    const double x = px(std::exp2(e));
    svg << "<line x1=\"" << x << "\" y1=\"" << kTop + plot_h << "\" x2=\"" << x << "\" y2=\""
        << kTop + plot_h + 5 << "\" stroke=\"black\"/>"
        << "<text x=\"" << x << "\" y=\"" << kTop + plot_h + 18
        << "\" text-anchor=\"middle\">2^" << e << "</text>\n";
  }
  for (int e = static_cast<int>(std::ceil(axes.log10_y_min));
       e <= static_cast<int>(std::floor(axes.log10_y_max)); ++e) {
    const double y = py(std::pow(10.0, e));
    svg << "<line x1=\"" << kLeft - 5 << "\" y1=\"" << y << "\" x2=\"" << kLeft << "\" y2=\"" << y
        << "\" stroke=\"black\"/>"
        << "<text x=\"" << kLeft - 8 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">1e" << e
        << "</text>\n";
  }
  svg << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 15
      << "\" text-anchor=\"middle\">" << xml_escape(x_label) << " (log2)</text>\n";
  svg << "<text transform=\"translate(18," << kTop + plot_h / 2
      << ") rotate(-90)\" text-anchor=\"middle\">" << xml_escape(y_label) << " (log10)</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kColors[i % std::size(kColors)];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t p = 0; p < series[i].points.size(); ++p) {
      const auto& [x, y] = series[i].points[p];
      svg << (p ? " " : "") << px(x) << ',' << py(y);
    }
    svg << "\"/>\n";
    const double ly = kTop + 10 + 18.0 * static_cast<double>(i);
    const double lx = kLeft + plot_w + 15;
    svg << "<line x1=\"" << lx << "\" y1=\"" << ly << "\" x2=\"" << lx + 20 << "\" y2=\"" << ly
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>"
        << "<text x=\"" << lx + 26 << "\" y=\"" << ly + 4 << "\">" << xml_escape(series[i].label)
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace dsm
