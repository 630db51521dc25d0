#include "dsm/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "dsm/error.hpp"
#include "dsm/rng.hpp"

namespace dsm {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Relu: return "relu";
    case Activation::Unit: return "unit";
  }
  return "identity";
}

Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::Identity;
  if (s == "relu") return Activation::Relu;
  if (s == "unit") return Activation::Unit;
  throw std::invalid_argument("unknown activation: " + s);
}

// ---------------------------------------------------------------------------
// DenseModel

DenseModel::DenseModel(std::size_t input_dim, std::size_t width, Activation activation,
                       std::uint64_t seed)
    : activation_(activation), seed_(seed) {
  require(input_dim >= 1, "DenseModel: input_dim must be >= 1");
  require(width >= 1, "DenseModel: width must be >= 1");
  Rng rng(seed);
  bottom_ = RowMatrix(width, input_dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(input_dim));
  for (double& v : bottom_.data()) v = scale * rng.normal();
  top_.assign(width, 0.0);
}

DenseModel::DenseModel(RowMatrix bottom, std::vector<double> top, Activation activation,
                       std::uint64_t seed)
    : bottom_(std::move(bottom)), top_(std::move(top)), activation_(activation), seed_(seed) {
  require(bottom_.rows() >= 1 && bottom_.cols() >= 1, "DenseModel: empty bottom layer");
  require_dim(bottom_.rows(), top_.size(), "DenseModel top layer");
}

double DenseModel::activate(double z) const noexcept {
  switch (activation_) {
    case Activation::Identity: return z;
    case Activation::Relu: return z > 0.0 ? z : 0.0;
    case Activation::Unit: return 1.0;
  }
  return z;
}

void DenseModel::pre_activations(std::span<const double> x, std::span<double> out) const {
  require_dim(input_dim(), x.size(), "DenseModel input");
  for (std::size_t j = 0; j < width(); ++j) out[j] = dot(bottom_.row(j), x);
}

void DenseModel::features(std::span<const double> x, ActiveFeatures& out) const {
  require_dim(input_dim(), x.size(), "DenseModel input");
  out.units.resize(width());
  out.values.resize(width());
  for (std::size_t j = 0; j < width(); ++j) {
    out.units[j] = static_cast<std::uint32_t>(j);
    out.values[j] = activate(dot(bottom_.row(j), x));
  }
}

double DenseModel::forward(std::span<const double> x) const {
  require_dim(input_dim(), x.size(), "dense_forward");
  double g = 0.0;
  for (std::size_t j = 0; j < width(); ++j) g += top_[j] * activate(dot(bottom_.row(j), x));
  return g;
}

// ---------------------------------------------------------------------------
// Masks

ActiveSet topk_indices(std::span<const double> z, std::size_t k) {
  require(k >= 1 && k <= z.size(), "top-k: K must lie in [1, t]");
  std::vector<std::uint32_t> idx(z.size());
  std::iota(idx.begin(), idx.end(), 0U);
  const auto better = [&](std::uint32_t a, std::uint32_t b) {
    return z[a] > z[b] || (z[a] == z[b] && a < b);
  };
  if (k < idx.size()) {
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k - 1), idx.end(),
                     better);
    idx.resize(k);
  }
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<std::uint8_t> to_indicator(const ActiveSet& active, std::size_t width) {
  std::vector<std::uint8_t> m(width, 0);
  for (auto j : active) m.at(j) = 1;
  return m;
}

std::vector<std::uint8_t> mask_topk(std::span<const double> z, std::size_t k) {
  return to_indicator(topk_indices(z, k), z.size());
}

RandomHashRouting RandomHashRouting::make(std::size_t input_dim, std::size_t width,
                                          std::size_t k, std::uint64_t hash_seed,
                                          std::size_t mask_dim) {
  require(k >= 1 && k <= width, "random hash: K must lie in [1, t]");
  require(mask_dim >= 1 && mask_dim <= width, "random hash: mask_dim must lie in [1, t]");
  RandomHashRouting r{k, width, hash_seed, mask_dim, {}};
  if (input_dim != mask_dim) {
    Rng rng(derive_seed(hash_seed, 0x70726f6aULL));
    r.projection = RowMatrix(mask_dim, input_dim);
    for (double& v : r.projection.data()) v = rng.normal();
  }
  return r;
}

ActiveSet random_hash_active(const RandomHashRouting& r, std::span<const double> x) {
  std::vector<double> projected;
  std::span<const double> z = x;
  if (!r.projection.empty()) {
    require_dim(r.projection.cols(), x.size(), "random hash input");
    projected.resize(r.mask_dim);
    for (std::size_t i = 0; i < r.mask_dim; ++i) projected[i] = dot(r.projection.row(i), x);
    z = projected;
  } else {
    require_dim(r.mask_dim, x.size(), "random hash input");
  }
  std::uint64_t digest = mix64(r.hash_seed);
  for (double v : z) digest = mix64(digest ^ canonical_bits(v));

  std::vector<std::uint64_t> score(r.width);
  for (std::size_t j = 0; j < r.width; ++j) {
    const std::uint64_t local = canonical_bits(z[j % r.mask_dim]) + (j + 1) * 0x9e3779b97f4a7c15ULL;
    score[j] = mix64(digest ^ mix64(local));
  }
  std::vector<std::uint32_t> idx(r.width);
  std::iota(idx.begin(), idx.end(), 0U);
  const auto better = [&](std::uint32_t a, std::uint32_t b) {
    return score[a] > score[b] || (score[a] == score[b] && a < b);
  };
  if (r.k < idx.size()) {
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(r.k - 1), idx.end(),
                     better);
    idx.resize(r.k);
  }
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<std::uint8_t> mask_random_hash(std::span<const double> x, std::size_t width,
                                           std::size_t k, std::uint64_t hash_seed,
                                           std::size_t mask_dim) {
  const auto r = RandomHashRouting::make(x.size(), width, k, hash_seed, mask_dim);
  return to_indicator(random_hash_active(r, x), width);
}

std::vector<std::uint8_t> block_routing_mask(std::span<const std::size_t> choices,
                                             std::size_t block_size) {
  require(block_size >= 1, "block routing: block size must be >= 1");
  std::vector<std::uint8_t> m(choices.size() * block_size, 0);
  for (std::size_t b = 0; b < choices.size(); ++b) {
    if (choices[b] >= block_size) {
      throw std::out_of_range("block routing: choice " + std::to_string(choices[b]) +
                              " outside block of size " + std::to_string(block_size));
    }
    m[b * block_size + choices[b]] = 1;
  }
  return m;
}

std::size_t LshRouting::expert_of(std::span<const double> x) const {
  const BucketKey key = std::visit([&](const auto& f) { return f.hash(x); }, family);
  return static_cast<std::size_t>(key_digest(key) % num_experts);
}

std::string routing_name(const RoutingRule& r) {
  switch (r.index()) {
    case 0: return "topk";
    case 1: return "randhash";
    case 2: return "lsh";
    default: return "nearest";
  }
}

// ---------------------------------------------------------------------------
// DsmModel

DsmModel::DsmModel(DenseModel core, RoutingRule routing)
    : core_(std::move(core)), routing_(std::move(routing)) {
  const std::size_t t = core_.width();
  if (const auto* r = std::get_if<TopKRouting>(&routing_)) {
    require(r->k >= 1 && r->k <= t, "DsmModel: top-k K must lie in [1, t]");
  } else if (const auto* r = std::get_if<RandomHashRouting>(&routing_)) {
    require(r->width == t, "DsmModel: random-hash width must equal model width");
  } else if (const auto* r = std::get_if<LshRouting>(&routing_)) {
    require(r->num_experts >= 1 && r->expert_size >= 1, "DsmModel: empty expert layout");
    require(r->num_experts * r->expert_size == t, "DsmModel: experts * expert_size must equal t");
    const std::size_t fd = std::visit([](const auto& f) { return f.dim(); }, r->family);
    require_dim(core_.input_dim(), fd, "DsmModel LSH family");
  } else if (const auto* r = std::get_if<NearestPointRouting>(&routing_)) {
    require_dim(t, r->points.rows(), "DsmModel nearest-point anchors");
    require_dim(core_.input_dim(), r->points.cols(), "DsmModel nearest-point anchors");
  }
}

std::size_t DsmModel::sparsity() const noexcept {
  return std::visit(
      [](const auto& r) -> std::size_t {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, TopKRouting> || std::is_same_v<T, RandomHashRouting>) {
          return r.k;
        } else if constexpr (std::is_same_v<T, LshRouting>) {
          return r.expert_size;
        } else {
          return 1;
        }
      },
      routing_);
}

ActiveSet DsmModel::route(std::span<const double> x) const {
  require_dim(input_dim(), x.size(), "dsm route");
  if (const auto* r = std::get_if<TopKRouting>(&routing_)) {
    std::vector<double> z(width());
    core_.pre_activations(x, z);
    return topk_indices(z, r->k);
  }
  if (const auto* r = std::get_if<RandomHashRouting>(&routing_)) return random_hash_active(*r, x);
  if (const auto* r = std::get_if<LshRouting>(&routing_)) {
    const std::size_t e = r->expert_of(x);
    ActiveSet a(r->expert_size);
    std::iota(a.begin(), a.end(), static_cast<std::uint32_t>(e * r->expert_size));
    return a;
  }
  const auto& pts = std::get<NearestPointRouting>(routing_).points;
  std::uint32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pts.rows(); ++i) {
    const double d = squared_distance(pts.row(i), x);
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::uint32_t>(i);
    }
  }
  return {best};
}

void DsmModel::features(std::span<const double> x, ActiveFeatures& out) const {
  require_dim(input_dim(), x.size(), "dsm features");
  if (const auto* r = std::get_if<TopKRouting>(&routing_)) {
    std::vector<double> z(width());
    core_.pre_activations(x, z);
    out.units = topk_indices(z, r->k);
    out.values.resize(out.units.size());
    for (std::size_t i = 0; i < out.units.size(); ++i) {
      out.values[i] = core_.activate(z[out.units[i]]);
    }
    return;
  }
  out.units = route(x);
  out.values.resize(out.units.size());
  for (std::size_t i = 0; i < out.units.size(); ++i) {
    out.values[i] = core_.activate(core_.pre_activation(out.units[i], x));
  }
}

DsmModel::Output DsmModel::forward(std::span<const double> x) const {
  ActiveFeatures f;
  features(x, f);
  const auto a = top();
  double g = 0.0;
  for (std::size_t i = 0; i < f.units.size(); ++i) g += a[f.units[i]] * f.values[i];
  return {g, std::move(f.units)};
}

// ---------------------------------------------------------------------------
// Simulations

DsmModel simulate_interpolation(const RowMatrix& points, std::span<const double> values,
                                std::uint64_t seed) {
  constexpr double kMinInner = 1e-6;
  constexpr int kMaxRedraws = 64;
  require(points.rows() >= 1, "simulate_interpolation: need at least one point");
  require_dim(points.rows(), values.size(), "simulate_interpolation values");
  const std::size_t t = points.rows();
  const std::size_t d = points.cols();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  Rng rng(seed);
  RowMatrix bottom(t, d);
  std::vector<double> top(t);
  for (std::size_t i = 0; i < t; ++i) {
    auto b = bottom.row(i);
    double inner = 0.0;
    int tries = 0;
    do {
      if (tries++ > kMaxRedraws) {
        throw NumericalError("simulate_interpolation: bottom row stays orthogonal to point " +
                             std::to_string(i));
      }
      for (double& v : b) v = scale * rng.normal();
      inner = dot(b, points.row(i));
    } while (!(std::abs(inner) >= kMinInner));
    top[i] = values[i] / inner;
  }
  return DsmModel(DenseModel(std::move(bottom), std::move(top), Activation::Identity, seed),
                  NearestPointRouting{points});
}

DsmModel simulate_knn(const RowMatrix& anchors, std::span<const double> values, std::size_t k) {
  constexpr double kUnitTol = 1e-9;
  require(anchors.rows() >= 1, "simulate_knn: need at least one anchor");
  require_dim(anchors.rows(), values.size(), "simulate_knn values");
  require(k >= 1 && k <= anchors.rows(), "simulate_knn: k must lie in [1, n]");
  for (std::size_t i = 0; i < anchors.rows(); ++i) {
    if (std::abs(norm2(anchors.row(i)) - 1.0) > kUnitTol) {
      throw std::invalid_argument("simulate_knn: anchor " + std::to_string(i) +
                                  " is not unit norm");
    }
  }
  std::vector<double> top(values.begin(), values.end());
  for (double& v : top) v /= static_cast<double>(k);
  return DsmModel(DenseModel(anchors, std::move(top), Activation::Unit), TopKRouting{k});
}

// ---------------------------------------------------------------------------
// LshLearner

LshLearner::LshLearner(EuclideanLsh family, unsigned degree)
    : family_(std::move(family)),
      table_(family_.family_id(), family_.num_planes(), family_.dim(), degree) {}

LshLearner::LshLearner(const LshLearner& o)
    : family_(o.family_),
      table_(o.table_),
      inputs_(o.inputs_),
      keys_(o.keys_),
      fitted_(o.fitted_),
      fallbacks_(o.fallbacks_.load()) {}

LshLearner& LshLearner::operator=(const LshLearner& o) {
  if (this != &o) {
    family_ = o.family_;
    table_ = o.table_;
    inputs_ = o.inputs_;
    keys_ = o.keys_;
    fitted_ = o.fitted_;
    fallbacks_.store(o.fallbacks_.load());
  }
  return *this;
}

LshLearner::LshLearner(LshLearner&& o) noexcept
    : family_(std::move(o.family_)),
      table_(std::move(o.table_)),
      inputs_(std::move(o.inputs_)),
      keys_(std::move(o.keys_)),
      fitted_(o.fitted_),
      fallbacks_(o.fallbacks_.load()) {}

LshLearner& LshLearner::operator=(LshLearner&& o) noexcept {
  family_ = std::move(o.family_);
  table_ = std::move(o.table_);
  inputs_ = std::move(o.inputs_);
  keys_ = std::move(o.keys_);
  fitted_ = o.fitted_;
  fallbacks_.store(o.fallbacks_.load());
  return *this;
}

void LshLearner::fit(const RowMatrix& inputs, std::span<const double> targets) {
  require(inputs.rows() >= 1, "lsh_fit: empty dataset");
  require_dim(inputs.rows(), targets.size(), "lsh_fit targets");
  require_dim(family_.dim(), inputs.cols(), "lsh_fit inputs");
  table_ = BucketTable(family_.family_id(), family_.num_planes(), family_.dim(), table_.degree());
  keys_.clear();
  keys_.reserve(inputs.rows());
  for (std::size_t i = 0; i < inputs.rows(); ++i) {
    keys_.push_back(family_.hash(inputs.row(i)));
    table_.insert(keys_.back(), inputs.row(i), targets[i]);
  }
  table_.finalize();
  inputs_ = inputs;
  fitted_ = true;
  fallbacks_.store(0);
}

double LshLearner::predict(std::span<const double> x) const {
  if (!fitted_) throw std::logic_error("lsh_predict: learner is not fitted");
  const BucketKey key = family_.hash(x);
  if (auto v = table_.evaluate(key, x)) return *v;

  fallbacks_.fetch_add(1, std::memory_order_relaxed);
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < inputs_.rows(); ++i) {
    const double d = squared_distance(inputs_.row(i), x);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return *table_.evaluate(keys_[best], x);
}

LshLearner LshLearner::restore(EuclideanLsh family, BucketTable table, RowMatrix inputs) {
  require(table.family_id() == family.family_id(), "LshLearner::restore: table/family mismatch");
  LshLearner l(std::move(family), table.degree());
  l.table_ = std::move(table);
  l.keys_.reserve(inputs.rows());
  for (std::size_t i = 0; i < inputs.rows(); ++i) {
    l.keys_.push_back(l.family_.hash(inputs.row(i)));
    require(l.table_.find(l.keys_.back()) != nullptr,
            "LshLearner::restore: retained input hashes to an empty bucket");
  }
  l.inputs_ = std::move(inputs);
  l.fitted_ = true;
  return l;
}

double lsh_ensemble_predict(std::span<const LshLearner> learners, std::span<const double> weights,
                            std::span<const double> x) {
  require(!learners.empty(), "lsh_ensemble_predict: need at least one learner");
  require_dim(learners.size(), weights.size(), "lsh_ensemble_predict weights");
  double g = 0.0;
  for (std::size_t i = 0; i < learners.size(); ++i) g += weights[i] * learners[i].predict(x);
  return g;
}

double lsh_ensemble_predict(std::span<const LshLearner> learners, std::span<const double> x) {
  const std::vector<double> w(learners.size(), 1.0 / static_cast<double>(learners.size()));
  return lsh_ensemble_predict(learners, w, x);
}

// ---------------------------------------------------------------------------
// Width calibration

namespace {

/// True when some bucket of `points` has two members farther apart than
/// `limit`. Stops at the first violation.
bool exceeds_diameter(const EuclideanLsh& lsh, const RowMatrix& points, double limit) {
  std::unordered_map<BucketKey, std::vector<std::size_t>, BucketKeyHash> groups;
  const double limit2 = limit * limit;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    auto& members = groups[lsh.hash(points.row(i))];
    for (std::size_t m : members) {
      if (squared_distance(points.row(m), points.row(i)) > limit2) return true;
    }
    members.push_back(i);
  }
  return false;
}

}  // namespace

CalibrationResult calibrate_width(std::size_t dim, std::size_t num_planes, std::uint64_t seed,
                                  const RowMatrix& inputs, double target_diameter,
                                  int max_iterations) {
  require(target_diameter > 0.0, "calibrate_width: target diameter must be positive");
  require(inputs.rows() >= 2, "calibrate_width: need at least two inputs");
  require_dim(dim, inputs.cols(), "calibrate_width inputs");
  require(max_iterations >= 1, "calibrate_width: need at least one iteration");

  // Twice the largest distance from the centroid bounds the data diameter.
  std::vector<double> centroid(dim, 0.0);
  for (std::size_t i = 0; i < inputs.rows(); ++i) {
    for (std::size_t c = 0; c < dim; ++c) centroid[c] += inputs(i, c);
  }
  for (double& c : centroid) c /= static_cast<double>(inputs.rows());
  double radius = 0.0;
  for (std::size_t i = 0; i < inputs.rows(); ++i) {
    radius = std::max(radius, distance(inputs.row(i), centroid));
  }
  const double w_max = std::max(2.0 * radius, std::numeric_limits<double>::min());

  const auto passes = [&](double w) {
    return !exceeds_diameter(EuclideanLsh(dim, num_planes, w, seed), inputs, target_diameter);
  };

  int it = 0;
  double lo = w_max;
  bool found = false;
  while (it < max_iterations) {
    ++it;
    if (passes(lo)) {
      found = true;
      break;
    }
    lo *= 0.5;
  }
  if (!found) {
    throw NumericalError("calibrate_width: no width within the iteration budget keeps buckets "
                         "under the target diameter");
  }
  if (lo < w_max) {
    double hi = 2.0 * lo;
    while (it < max_iterations) {
      ++it;
      const double mid = 0.5 * (lo + hi);
      if (passes(mid)) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
  }
  const auto stats = bucket_stats(EuclideanLsh(dim, num_planes, lo, seed), inputs);
  return {lo, stats.max_diameter, it};
}

// ---------------------------------------------------------------------------
// JSON

void to_json(nlohmann::json& j, const DenseModel& m) {
  j = nlohmann::json{{"kind", "dense"},
                     {"input_dim", m.input_dim()},
                     {"width", m.width()},
                     {"activation", to_string(m.activation())},
                     {"seed", m.seed()},
                     {"bottom", m.bottom().data()},
                     {"top", std::vector<double>(m.top().begin(), m.top().end())}};
}

DenseModel dense_model_from_json(const nlohmann::json& j) {
  const auto d = j.at("input_dim").get<std::size_t>();
  const auto t = j.at("width").get<std::size_t>();
  return DenseModel(RowMatrix(t, d, j.at("bottom").get<std::vector<double>>()),
                    j.at("top").get<std::vector<double>>(),
                    activation_from_string(j.at("activation").get<std::string>()),
                    j.at("seed").get<std::uint64_t>());
}

void to_json(nlohmann::json& j, const DsmModel& m) {
  nlohmann::json core = m.core();
  nlohmann::json routing;
  std::visit(
      [&](const auto& r) {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, TopKRouting>) {
          routing = {{"kind", "topk"}, {"k", r.k}};
        } else if constexpr (std::is_same_v<T, RandomHashRouting>) {
          routing = {{"kind", "randhash"},
                     {"k", r.k},
                     {"hash_seed", r.hash_seed},
                     {"mask_dim", r.mask_dim}};
        } else if constexpr (std::is_same_v<T, LshRouting>) {
          routing = {{"kind", "lsh"},
                     {"num_experts", r.num_experts},
                     {"expert_size", r.expert_size}};
          std::visit([&](const auto& f) { routing["family"] = f; }, r.family);
        } else {
          routing = {{"kind", "nearest"}, {"points", r.points.data()}};
        }
      },
      m.routing());
  j = nlohmann::json{{"kind", "dsm"},
                     {"input_dim", m.input_dim()},
                     {"width", m.width()},
                     {"sparsity", m.sparsity()},
                     {"core", std::move(core)},
                     {"routing", std::move(routing)}};
}

DsmModel dsm_model_from_json(const nlohmann::json& j) {
  DenseModel core = dense_model_from_json(j.at("core"));
  const auto& r = j.at("routing");
  const auto kind = r.at("kind").get<std::string>();
  if (kind == "topk") return DsmModel(std::move(core), TopKRouting{r.at("k").get<std::size_t>()});
  if (kind == "randhash") {
    auto rr = RandomHashRouting::make(core.input_dim(), core.width(), r.at("k").get<std::size_t>(),
                                      r.at("hash_seed").get<std::uint64_t>(),
                                      r.at("mask_dim").get<std::size_t>());
    return DsmModel(std::move(core), std::move(rr));
  }
  if (kind == "lsh") {
    const auto& f = r.at("family");
    LshRouting lr{f.at("family").get<std::string>() == "sign"
                      ? std::variant<SignLsh, EuclideanLsh>(sign_lsh_from_json(f))
                      : std::variant<SignLsh, EuclideanLsh>(euclidean_lsh_from_json(f)),
                  r.at("num_experts").get<std::size_t>(), r.at("expert_size").get<std::size_t>()};
    return DsmModel(std::move(core), std::move(lr));
  }
  if (kind == "nearest") {
    NearestPointRouting nr{RowMatrix(core.width(), core.input_dim(),
                                     r.at("points").get<std::vector<double>>())};
    return DsmModel(std::move(core), std::move(nr));
  }
  throw std::invalid_argument("unknown routing kind: " + kind);
}

void to_json(nlohmann::json& j, const LshLearner& m) {
  j = nlohmann::json{{"kind", "lsh"},
                     {"input_dim", m.family().dim()},
                     {"family", m.family()},
                     {"table", m.table()},
                     {"retained_inputs", m.retained_inputs().data()}};
}

LshLearner lsh_learner_from_json(const nlohmann::json& j) {
  auto family = euclidean_lsh_from_json(j.at("family"));
  auto table = bucket_table_from_json(j.at("table"));
  const auto flat = j.at("retained_inputs").get<std::vector<double>>();
  const std::size_t d = family.dim();
  RowMatrix inputs(flat.size() / d, d, flat);
  return LshLearner::restore(std::move(family), std::move(table), std::move(inputs));
}

}  // namespace dsm
