#include "dsm/lsh.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>

#include "dsm/error.hpp"
#include "dsm/rng.hpp"

namespace dsm {

std::uint64_t key_digest(const BucketKey& key) noexcept {
  std::uint64_t h = mix64(key.coords.size());
  for (std::int64_t c : key.coords) h = mix64(h ^ static_cast<std::uint64_t>(c));
  return h;
}

std::size_t BucketKeyHash::operator()(const BucketKey& key) const noexcept {
  return static_cast<std::size_t>(key_digest(key));
}

namespace {

RowMatrix gaussian_rows(Rng& rng, std::size_t rows, std::size_t cols) {
  RowMatrix m(rows, cols);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

void check_finite(std::span<const double> x, const char* where) {
  for (double v : x) {
    if (!std::isfinite(v)) throw NonFiniteInput(std::string(where) + ": non-finite input");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// EuclideanLsh

EuclideanLsh::EuclideanLsh(std::size_t dim, std::size_t num_planes, double width,
                           std::uint64_t seed)
    : width_(width), seed_(seed) {
  require(dim >= 1, "EuclideanLsh: dim must be >= 1");
  require(num_planes >= 1, "EuclideanLsh: num_planes must be >= 1");
  require(width > 0.0 && std::isfinite(width), "EuclideanLsh: width must be positive");
  Rng rng(seed);
  directions_ = gaussian_rows(rng, num_planes, dim);
  offsets_.resize(num_planes);
  for (double& b : offsets_) {
    b = width * rng.uniform();
    if (b >= width) b = std::nextafter(width, 0.0);
  }
}

EuclideanLsh EuclideanLsh::from_parameters(double width, RowMatrix directions,
                                           std::vector<double> offsets, std::uint64_t seed) {
  require(width > 0.0 && std::isfinite(width), "EuclideanLsh: width must be positive");
  require(directions.rows() >= 1 && directions.cols() >= 1,
          "EuclideanLsh: directions must be non-empty");
  require_dim(directions.rows(), offsets.size(), "EuclideanLsh offsets");
  for (double b : offsets) {
    require(b >= 0.0 && b < width, "EuclideanLsh: offsets must lie in [0, width)");
  }
  EuclideanLsh lsh;
  lsh.directions_ = std::move(directions);
  lsh.offsets_ = std::move(offsets);
  lsh.width_ = width;
  lsh.seed_ = seed;
  return lsh;
}

BucketKey EuclideanLsh::hash(std::span<const double> x) const {
  require_dim(dim(), x.size(), "euclidean_hash");
  check_finite(x, "euclidean_hash");
  BucketKey key;
  key.coords.resize(num_planes());
  for (std::size_t i = 0; i < num_planes(); ++i) {
    const double proj = dot(directions_.row(i), x) + offsets_[i];
    key.coords[i] = static_cast<std::int64_t>(std::floor(proj / width_));
  }
  return key;
}

std::string EuclideanLsh::family_id() const {
  char buf[128];
  std::snprintf(buf, sizeof buf, "euclidean/%zu/%zu/%.17g/%llu", dim(), num_planes(), width_,
                static_cast<unsigned long long>(seed_));
  return buf;
}

// ---------------------------------------------------------------------------
// SignLsh

SignLsh::SignLsh(std::size_t dim, std::size_t num_planes, std::uint64_t seed) : seed_(seed) {
  require(dim >= 1, "SignLsh: dim must be >= 1");
  require(num_planes >= 1, "SignLsh: num_planes must be >= 1");
  Rng rng(seed);
  directions_ = gaussian_rows(rng, num_planes, dim);
}

SignLsh SignLsh::from_parameters(RowMatrix directions, std::uint64_t seed) {
  require(directions.rows() >= 1 && directions.cols() >= 1,
          "SignLsh: directions must be non-empty");
  SignLsh lsh;
  lsh.directions_ = std::move(directions);
  lsh.seed_ = seed;
  return lsh;
}

BucketKey SignLsh::hash(std::span<const double> x) const {
  require_dim(dim(), x.size(), "sign_hash");
  BucketKey key;
  key.coords.resize(num_planes());
  for (std::size_t i = 0; i < num_planes(); ++i) {
    key.coords[i] = dot(directions_.row(i), x) >= 0.0 ? 1 : -1;
  }
  return key;
}

std::string SignLsh::family_id() const {
  char buf[96];
  std::snprintf(buf, sizeof buf, "sign/%zu/%zu/%llu", dim(), num_planes(),
                static_cast<unsigned long long>(seed_));
  return buf;
}

// ---------------------------------------------------------------------------
// BucketTable

BucketTable::BucketTable(std::string family_id, std::size_t key_length, std::size_t dim,
                         unsigned degree)
    : family_id_(std::move(family_id)), key_length_(key_length), dim_(dim), degree_(degree) {
  require(key_length >= 1, "BucketTable: key_length must be >= 1");
  require(dim >= 1, "BucketTable: dim must be >= 1");
  if (degree_ > 0) monomials_ = enumerate_monomials(dim_, degree_);
}

void BucketTable::insert(const BucketKey& key, std::span<const double> x, double y) {
  require_dim(key_length_, key.coords.size(), "BucketTable::insert key");
  require_dim(dim_, x.size(), "BucketTable::insert input");
  auto [it, inserted] = entries_.try_emplace(key);
  BucketPayload& p = it->second;
  if (inserted) p.centroid.assign(dim_, 0.0);
  ++p.count;
  const double inv = 1.0 / static_cast<double>(p.count);
  p.constant += (y - p.constant) * inv;
  for (std::size_t i = 0; i < dim_; ++i) p.centroid[i] += (x[i] - p.centroid[i]) * inv;
  if (degree_ > 0) {
    Samples& s = samples_[key];
    s.inputs.append_row(x);
    s.targets.push_back(y);
    dirty_ = true;
  }
}

void BucketTable::finalize() {
  if (degree_ == 0 || !dirty_) return;
  const std::size_t m = monomials_.size();
  std::vector<double> shifted(dim_);
  for (auto& [key, samples] : samples_) {
    BucketPayload& p = entries_.at(key);
    const std::size_t n = samples.targets.size();
    Eigen::MatrixXd phi(n, m);
    Eigen::VectorXd y(n);
    for (std::size_t r = 0; r < n; ++r) {
      const auto x = samples.inputs.row(r);
      for (std::size_t i = 0; i < dim_; ++i) shifted[i] = x[i] - p.centroid[i];
      for (std::size_t c = 0; c < m; ++c) phi(r, c) = monomial_value(monomials_[c], shifted);
      y(r) = samples.targets[r];
    }
    Eigen::MatrixXd gram = phi.transpose() * phi;
    gram.diagonal().array() += kRidge;
    const Eigen::VectorXd coef = gram.ldlt().solve(phi.transpose() * y);
    if (!coef.allFinite()) throw NumericalError("BucketTable::finalize: singular bucket fit");
    p.coefficients.assign(coef.data(), coef.data() + m);
  }
  dirty_ = false;
}

const BucketPayload* BucketTable::find(const BucketKey& key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

std::optional<double> BucketTable::evaluate(const BucketKey& key,
                                            std::span<const double> x) const {
  const BucketPayload* p = find(key);
  if (p == nullptr) return std::nullopt;
  if (degree_ == 0) return p->constant;
  if (dirty_ || p->coefficients.size() != monomials_.size()) {
    throw std::logic_error("BucketTable::evaluate: table not finalized");
  }
  require_dim(dim_, x.size(), "BucketTable::evaluate");
  std::vector<double> shifted(dim_);
  for (std::size_t i = 0; i < dim_; ++i) shifted[i] = x[i] - p->centroid[i];
  double v = 0.0;
  for (std::size_t c = 0; c < monomials_.size(); ++c) {
    v += p->coefficients[c] * monomial_value(monomials_[c], shifted);
  }
  return v;
}

void BucketTable::restore(BucketKey key, BucketPayload payload) {
  require_dim(key_length_, key.coords.size(), "BucketTable::restore key");
  require(payload.count >= 1, "BucketTable::restore: count must be >= 1");
  require_dim(dim_, payload.centroid.size(), "BucketTable::restore centroid");
  if (degree_ > 0) require_dim(monomials_.size(), payload.coefficients.size(), "coefficients");
  entries_.insert_or_assign(std::move(key), std::move(payload));
}

// ---------------------------------------------------------------------------
// Diagnostics

BucketStats bucket_stats(const EuclideanLsh& lsh, const RowMatrix& points) {
  require(points.rows() >= 2, "bucket_stats: need at least two points");
  require_dim(lsh.dim(), points.cols(), "bucket_stats");
  // Ordered map so the per-bucket diameter list has a reproducible order.
  std::map<BucketKey, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < points.rows(); ++i) groups[lsh.hash(points.row(i))].push_back(i);

  BucketStats stats;
  stats.sample_size = points.rows();
  stats.non_empty_count = groups.size();
  stats.diameters.reserve(groups.size());
  for (const auto& [key, members] : groups) {
    double best = 0.0;
    for (std::size_t a = 0; a < members.size(); ++a) {
      for (std::size_t b = a + 1; b < members.size(); ++b) {
        best = std::max(best, squared_distance(points.row(members[a]), points.row(members[b])));
      }
    }
    const double diam = std::sqrt(best);
    stats.diameters.push_back(diam);
    stats.max_diameter = std::max(stats.max_diameter, diam);
  }
  return stats;
}

// ---------------------------------------------------------------------------
// JSON

void to_json(nlohmann::json& j, const BucketKey& key) { j = key.coords; }

void from_json(const nlohmann::json& j, BucketKey& key) {
  key.coords = j.get<std::vector<std::int64_t>>();
}

void to_json(nlohmann::json& j, const BucketStats& stats) {
  j = nlohmann::json{{"non_empty", stats.non_empty_count},
                     {"max_diameter", stats.max_diameter},
                     {"sample_size", stats.sample_size}};
}

void to_json(nlohmann::json& j, const EuclideanLsh& lsh) {
  j = nlohmann::json{{"family", "euclidean"},
                     {"dim", lsh.dim()},
                     {"num_planes", lsh.num_planes()},
                     {"width", lsh.width()},
                     {"seed", lsh.seed()},
                     {"directions", lsh.directions().data()},
                     {"offsets", lsh.offsets()}};
}

EuclideanLsh euclidean_lsh_from_json(const nlohmann::json& j) {
  const auto dim = j.at("dim").get<std::size_t>();
  const auto planes = j.at("num_planes").get<std::size_t>();
  return EuclideanLsh::from_parameters(
      j.at("width").get<double>(),
      RowMatrix(planes, dim, j.at("directions").get<std::vector<double>>()),
      j.at("offsets").get<std::vector<double>>(), j.at("seed").get<std::uint64_t>());
}

void to_json(nlohmann::json& j, const SignLsh& lsh) {
  j = nlohmann::json{{"family", "sign"},
                     {"dim", lsh.dim()},
                     {"num_planes", lsh.num_planes()},
                     {"seed", lsh.seed()},
                     {"directions", lsh.directions().data()}};
}

SignLsh sign_lsh_from_json(const nlohmann::json& j) {
  const auto dim = j.at("dim").get<std::size_t>();
  const auto planes = j.at("num_planes").get<std::size_t>();
  return SignLsh::from_parameters(
      RowMatrix(planes, dim, j.at("directions").get<std::vector<double>>()),
      j.at("seed").get<std::uint64_t>());
}

void to_json(nlohmann::json& j, const BucketTable& table) {
  // Entries sorted by key so serialization is byte-stable.
  std::vector<const std::pair<const BucketKey, BucketPayload>*> sorted;
  sorted.reserve(table.entries().size());
  for (const auto& e : table.entries()) sorted.push_back(&e);
  std::sort(sorted.begin(), sorted.end(),
            [](const auto* a, const auto* b) { return a->first < b->first; });
  nlohmann::json entries = nlohmann::json::array();
  for (const auto* e : sorted) {
    nlohmann::json payload{{"constant", e->second.constant},
                           {"count", e->second.count},
                           {"centroid", e->second.centroid}};
    if (table.degree() > 0) payload["coefficients"] = e->second.coefficients;
    entries.push_back(nlohmann::json::array({e->first, std::move(payload)}));
  }
  j = nlohmann::json{{"family", table.family_id()},
                     {"key_length", table.key_length()},
                     {"dim", table.dim()},
                     {"degree", table.degree()},
                     {"entries", std::move(entries)}};
}

BucketTable bucket_table_from_json(const nlohmann::json& j) {
  BucketTable table(j.at("family").get<std::string>(), j.at("key_length").get<std::size_t>(),
                    j.at("dim").get<std::size_t>(), j.at("degree").get<unsigned>());
  for (const auto& e : j.at("entries")) {
    BucketPayload p;
    const auto& pj = e.at(1);
    p.constant = pj.at("constant").get<double>();
    p.count = pj.at("count").get<std::size_t>();
    p.centroid = pj.at("centroid").get<std::vector<double>>();
    if (pj.contains("coefficients")) p.coefficients = pj.at("coefficients").get<std::vector<double>>();
    table.restore(e.at(0).get<BucketKey>(), std::move(p));
  }
  return table;
}

}  // namespace dsm
