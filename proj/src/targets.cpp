#include "dsm/targets.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "dsm/error.hpp"

namespace dsm {

// ---------------------------------------------------------------------------
// Polynomial

double PolynomialSpec::evaluate(std::span<const double> x) const {
  require_dim(dim, x.size(), "polynomial evaluate");
  double v = 0.0;
  for (const auto& t : terms) v += t.coefficient * monomial_value(t.exponents, x);
  return v;
}

double PolynomialSpec::coefficient_l1() const noexcept {
  double s = 0.0;
  for (const auto& t : terms) s += std::abs(t.coefficient);
  return s;
}

PolynomialSpec gen_random_polynomial(std::size_t dim, unsigned degree, std::size_t num_terms,
                                     std::uint64_t seed, CoefficientScale scale) {
  require(dim >= 1, "gen_random_polynomial: dim must be >= 1");
  require(degree >= 1, "gen_random_polynomial: degree must be >= 1");
  require(num_terms >= 1, "gen_random_polynomial: num_terms must be >= 1");

  Rng rng(seed);
  PolynomialSpec spec{dim, degree, {}, seed};
  const std::uint64_t total = monomial_count(dim, degree);
  if (num_terms >= total) {
    require(total <= (1ULL << 24), "gen_random_polynomial: too many monomials to enumerate");
    for (auto& e : enumerate_monomials(dim, degree)) spec.terms.push_back({std::move(e), 0.0});
  } else {
    // Uniform distinct draws: a random `dim`-subset of the dim + degree
    // stars-and-bars slots (Floyd's algorithm) is a uniform multi-index.
    const auto slots = static_cast<std::uint32_t>(dim + degree);
    std::set<MultiIndex> seen;
    std::vector<std::uint32_t> bars;
    while (spec.terms.size() < num_terms) {
      std::set<std::uint32_t> chosen;
      for (std::uint32_t j = slots - static_cast<std::uint32_t>(dim); j < slots; ++j) {
        const auto r = static_cast<std::uint32_t>(rng.below(j + 1));
        if (!chosen.insert(r).second) chosen.insert(j);
      }
      bars.assign(chosen.begin(), chosen.end());
      MultiIndex e = multi_index_from_bars(bars, dim, degree);
      if (seen.insert(e).second) spec.terms.push_back({std::move(e), 0.0});
    }
  }

  double l1 = 0.0;
  do {
    l1 = 0.0;
    for (auto& t : spec.terms) {
      t.coefficient = rng.uniform(-1.0, 1.0);
      l1 += std::abs(t.coefficient);
    }
  } while (l1 == 0.0);
  const double target = scale == CoefficientScale::InverseDegree ? 1.0 / degree : 1.0;
  for (auto& t : spec.terms) t.coefficient *= target / l1;
  return spec;
}

// ---------------------------------------------------------------------------
// Hypercube

std::vector<double> HypercubeSpec::corner(std::size_t index) const {
  std::vector<double> y(dim);
  for (std::size_t i = 0; i < dim; ++i) y[i] = ((index >> (dim - 1 - i)) & 1U) ? -1.0 : 1.0;
  return y;
}

double HypercubeSpec::indicator(std::size_t index, std::span<const double> x) const {
  double v = 1.0;
  for (std::size_t i = 0; i < dim; ++i) {
    const double yi = ((index >> (dim - 1 - i)) & 1U) ? -1.0 : 1.0;
    v *= 0.5 * (1.0 + yi * x[i]);
  }
  return v;
}

double HypercubeSpec::evaluate(std::span<const double> x) const {
  require_dim(dim, x.size(), "hypercube evaluate");
  for (double v : x) {
    if (!(std::abs(v) <= 1.0)) throw OutOfDomain("hypercube evaluate: input outside [-1, 1]^d");
  }
  double f = 0.0;
  for (std::size_t c = 0; c < corner_values.size(); ++c) f += corner_values[c] * indicator(c, x);
  return f;
}

HypercubeSpec gen_hypercube(std::size_t dim, std::uint64_t seed) {
  require(dim >= 1, "gen_hypercube: dim must be >= 1");
  require(dim <= HypercubeSpec::kMaxDim, "gen_hypercube: dim exceeds the cap of 16");
  Rng rng(seed);
  HypercubeSpec spec{dim, std::vector<std::int8_t>(std::size_t{1} << dim), seed};
  for (auto& v : spec.corner_values) v = static_cast<std::int8_t>(rng.sign());
  return spec;
}

// ---------------------------------------------------------------------------
// Cone

std::vector<double> ConeFunctionSpec::center(std::size_t index) const {
  std::vector<double> v(intrinsic_dim);
  const std::size_t m = per_axis();
  for (std::size_t i = intrinsic_dim; i-- > 0;) {
    const auto j = static_cast<double>(index % m) - static_cast<double>(half_count);
    v[i] = spacing() * j;
    index /= m;
  }
  return v;
}

RowMatrix ConeFunctionSpec::centers() const {
  RowMatrix out(num_centers(), intrinsic_dim);
  for (std::size_t c = 0; c < num_centers(); ++c) {
    const auto v = center(c);
    std::copy(v.begin(), v.end(), out.row(c).begin());
  }
  return out;
}

double ConeFunctionSpec::evaluate(std::span<const double> x) const {
  require_dim(intrinsic_dim, x.size(), "cone evaluate");
  // The only center whose support can contain x is the one of x's grid cell.
  const double h = spacing();
  const auto J = static_cast<double>(half_count);
  std::size_t index = 0;
  double dist2 = 0.0;
  for (std::size_t i = 0; i < intrinsic_dim; ++i) {
    const double j = std::clamp(std::round(x[i] / h), -J, J);
    index = index * per_axis() + static_cast<std::size_t>(j + J);
    const double d = x[i] - j * h;
    dist2 += d * d;
  }
  const double mag = std::max(0.0, epsilon - lipschitz * std::sqrt(dist2));
  return signs[index] * mag;
}

ConeFunctionSpec gen_cone(std::size_t k, double lipschitz, double epsilon, double extent,
                          std::uint64_t seed) {
  require(k >= 1, "gen_cone: k must be >= 1");
  require(lipschitz > 0.0 && epsilon > 0.0 && extent > 0.0,
          "gen_cone: lipschitz, epsilon and extent must be positive");
  ConeFunctionSpec spec;
  spec.intrinsic_dim = k;
  spec.lipschitz = lipschitz;
  spec.epsilon = epsilon;
  spec.seed = seed;
  const double half_side = epsilon / lipschitz;
  const double fit = (extent - half_side) / (2.0 * half_side);
  spec.half_count = fit > 0.0 ? static_cast<std::size_t>(std::floor(fit)) : 0;
  std::size_t n = 1;
  for (std::size_t i = 0; i < k; ++i) {
    require(n <= (std::size_t{1} << 26) / spec.per_axis(), "gen_cone: grid too large");
    n *= spec.per_axis();
  }
  Rng rng(seed);
  spec.signs.resize(n);
  for (auto& s : spec.signs) s = static_cast<std::int8_t>(rng.sign());
  return spec;
}

// ---------------------------------------------------------------------------
// Fourier

double FourierSpec::eta_magnitude() const noexcept {
  return lipschitz / (constant_c * std::sqrt(static_cast<double>(intrinsic_dim)) *
                      std::numbers::pi);
}

std::vector<std::uint32_t> FourierSpec::frequency(std::size_t index) const {
  std::vector<std::uint32_t> n(intrinsic_dim);
  for (std::size_t i = intrinsic_dim; i-- > 0;) {
    n[i] = static_cast<std::uint32_t>(index % inv_eps1) + 1;
    index /= inv_eps1;
  }
  return n;
}

double FourierSpec::evaluate(std::span<const double> x) const {
  require_dim(intrinsic_dim, x.size(), "fourier evaluate");
  const double scale = eta_magnitude() * std::pow(eps1(), alpha) * 2.0;
  double f = 0.0;
  for (std::size_t t = 0; t < signs.size(); ++t) {
    const auto n = frequency(t);
    double phase = 0.0;
    for (std::size_t i = 0; i < intrinsic_dim; ++i) phase += n[i] * x[i];
    f += signs[t] * std::cos(std::numbers::pi * phase);
  }
  return scale * f;
}

FourierSpec gen_fourier(std::size_t k, std::size_t inv_eps1, double lipschitz, double constant_c,
                        double alpha, std::uint64_t seed) {
  require(k >= 1, "gen_fourier: k must be >= 1");
  require(inv_eps1 >= 1, "gen_fourier: 1/eps1 must be >= 1");
  require(lipschitz > 0.0 && constant_c > 0.0, "gen_fourier: L and C must be positive");
  FourierSpec spec;
  spec.intrinsic_dim = k;
  spec.inv_eps1 = inv_eps1;
  spec.alpha = alpha > 0.0 ? alpha : static_cast<double>(k) / 2.0 + 1.0;
  spec.constant_c = constant_c;
  spec.lipschitz = lipschitz;
  spec.seed = seed;
  std::size_t n = 1;
  for (std::size_t i = 0; i < k; ++i) {
    require(n <= (std::size_t{1} << 24) / inv_eps1, "gen_fourier: too many terms");
    n *= inv_eps1;
  }
  Rng rng(seed);
  spec.signs.resize(n);
  for (auto& s : spec.signs) s = static_cast<std::int8_t>(rng.sign());
  return spec;
}

// ---------------------------------------------------------------------------
// Subspace embedding

std::vector<double> SubspaceEmbedding::project(std::span<const double> x) const {
  require_dim(ambient_dim, x.size(), "subspace project");
  std::vector<double> u(intrinsic_dim);
  for (std::size_t j = 0; j < intrinsic_dim; ++j) u[j] = dot(rows.row(j), x);
  return u;
}

std::vector<double> SubspaceEmbedding::lift(std::span<const double> coords) const {
  require_dim(intrinsic_dim, coords.size(), "subspace lift");
  std::vector<double> x(ambient_dim, 0.0);
  for (std::size_t j = 0; j < intrinsic_dim; ++j) {
    const auto r = rows.row(j);
    for (std::size_t i = 0; i < ambient_dim; ++i) x[i] += coords[j] * r[i];
  }
  return x;
}

double SubspaceEmbedding::evaluate(std::span<const double> x) const {
  const auto u = project(x);
  return (*inner)(u);
}

RowMatrix random_orthonormal_rows(std::size_t k, std::size_t d, Rng& rng) {
  require(k >= 1 && k <= d, "random_orthonormal_rows: need 1 <= k <= d");
  constexpr int kMaxRedraws = 16;
  constexpr double kCollapse = 1e-8;
  RowMatrix a(k, d);
  int redraws = 0;
  for (std::size_t r = 0; r < k;) {
    auto row = a.row(r);
    for (double& v : row) v = rng.normal();
    const double start = norm2(row);
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t q = 0; q < r; ++q) {
        const auto prev = a.row(q);
        const double c = dot(prev, row);
        for (std::size_t i = 0; i < d; ++i) row[i] -= c * prev[i];
      }
    }
    const double len = norm2(row);
    if (!(len > kCollapse * start)) {
      if (++redraws > kMaxRedraws) {
        throw NumericalError("random_orthonormal_rows: degenerate draws exhausted retries");
      }
      continue;
    }
    for (double& v : row) v /= len;
    ++r;
  }
  return a;
}

SubspaceEmbedding gen_subspace_embedding(std::size_t d, std::size_t k, TargetFunction inner,
                                         std::uint64_t seed) {
  require(k >= 1 && k <= d, "gen_subspace_embedding: need 1 <= k <= d");
  require_dim(k, inner.input_dim(), "gen_subspace_embedding inner function");
  Rng rng(seed);
  SubspaceEmbedding emb;
  emb.ambient_dim = d;
  emb.intrinsic_dim = k;
  emb.rows = random_orthonormal_rows(k, d, rng);
  emb.inner = std::make_shared<const TargetFunction>(std::move(inner));
  emb.seed = seed;
  return emb;
}

void sample_slice(const RowMatrix& rows, Rng& rng, std::span<double> coords,
                  std::span<double> point) {
  const std::size_t k = rows.rows();
  const std::size_t d = rows.cols();
  require_dim(k, coords.size(), "sample_slice coords");
  require_dim(d, point.size(), "sample_slice point");
  std::vector<double> bound(k);
  for (std::size_t j = 0; j < k; ++j) {
    double l1 = 0.0;
    for (double v : rows.row(j)) l1 += std::abs(v);
    bound[j] = l1;
  }
  for (;;) {
    for (std::size_t j = 0; j < k; ++j) coords[j] = rng.uniform(-bound[j], bound[j]);
    bool inside = true;
    for (std::size_t i = 0; i < d && inside; ++i) {
      double xi = 0.0;
      for (std::size_t j = 0; j < k; ++j) xi += coords[j] * rows(j, i);
      point[i] = xi;
      inside = std::abs(xi) <= 1.0;
    }
    if (inside) return;
  }
}

// ---------------------------------------------------------------------------
// TargetFunction

namespace {
template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;
}  // namespace

double TargetFunction::operator()(std::span<const double> x) const {
  return std::visit([&](const auto& s) { return s.evaluate(x); }, spec_);
}

std::size_t TargetFunction::input_dim() const noexcept {
  return std::visit(overloaded{
                        [](const PolynomialSpec& s) { return s.dim; },
                        [](const HypercubeSpec& s) { return s.dim; },
                        [](const SubspaceEmbedding& s) { return s.ambient_dim; },
                        [](const ConeFunctionSpec& s) { return s.intrinsic_dim; },
                        [](const FourierSpec& s) { return s.intrinsic_dim; },
                    },
                    spec_);
}

std::string TargetFunction::family() const {
  return std::visit(overloaded{
                        [](const PolynomialSpec&) { return std::string("poly"); },
                        [](const HypercubeSpec&) { return std::string("hypercube"); },
                        [](const SubspaceEmbedding&) { return std::string("subspace"); },
                        [](const ConeFunctionSpec&) { return std::string("cone"); },
                        [](const FourierSpec&) { return std::string("fourier"); },
                    },
                    spec_);
}

void to_json(nlohmann::json& j, const TargetFunction& f) {
  using nlohmann::json;
  j = std::visit(
      overloaded{
          [](const PolynomialSpec& s) {
            json terms = json::array();
            for (const auto& t : s.terms) terms.push_back({{"e", t.exponents}, {"c", t.coefficient}});
            return json{{"family", "poly"},   {"dim", s.dim},   {"degree", s.degree},
                        {"seed", s.seed},     {"terms", terms}};
          },
          [](const HypercubeSpec& s) {
            return json{{"family", "hypercube"},
                        {"dim", s.dim},
                        {"seed", s.seed},
                        {"corner_values", s.corner_values}};
          },
          [](const SubspaceEmbedding& s) {
            return json{{"family", "subspace"},
                        {"ambient_dim", s.ambient_dim},
                        {"intrinsic_dim", s.intrinsic_dim},
                        {"seed", s.seed},
                        {"rows", s.rows.data()},
                        {"inner", *s.inner}};
          },
          [](const ConeFunctionSpec& s) {
            return json{{"family", "cone"},          {"k", s.intrinsic_dim},
                        {"lipschitz", s.lipschitz},  {"epsilon", s.epsilon},
                        {"half_count", s.half_count}, {"seed", s.seed},
                        {"signs", s.signs}};
          },
          [](const FourierSpec& s) {
            return json{{"family", "fourier"},     {"k", s.intrinsic_dim},
                        {"inv_eps1", s.inv_eps1},  {"alpha", s.alpha},
                        {"C", s.constant_c},       {"lipschitz", s.lipschitz},
                        {"seed", s.seed},          {"signs", s.signs}};
          },
      },
      f.spec());
}

TargetFunction target_function_from_json(const nlohmann::json& j) {
  const auto family = j.at("family").get<std::string>();
  if (family == "poly") {
    PolynomialSpec s;
    s.dim = j.at("dim").get<std::size_t>();
    s.degree = j.at("degree").get<unsigned>();
    s.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& t : j.at("terms")) {
      s.terms.push_back({t.at("e").get<MultiIndex>(), t.at("c").get<double>()});
      require_dim(s.dim, s.terms.back().exponents.size(), "poly term");
    }
    return s;
  }
  if (family == "hypercube") {
    HypercubeSpec s;
    s.dim = j.at("dim").get<std::size_t>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.corner_values = j.at("corner_values").get<std::vector<std::int8_t>>();
    require(s.dim <= HypercubeSpec::kMaxDim, "hypercube: dim exceeds cap");
    require_dim(std::size_t{1} << s.dim, s.corner_values.size(), "hypercube corner values");
    return s;
  }
  if (family == "subspace") {
    SubspaceEmbedding s;
    s.ambient_dim = j.at("ambient_dim").get<std::size_t>();
    s.intrinsic_dim = j.at("intrinsic_dim").get<std::size_t>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.rows = RowMatrix(s.intrinsic_dim, s.ambient_dim, j.at("rows").get<std::vector<double>>());
    s.inner = std::make_shared<const TargetFunction>(target_function_from_json(j.at("inner")));
    require_dim(s.intrinsic_dim, s.inner->input_dim(), "subspace inner function");
    return s;
  }
  if (family == "cone") {
    ConeFunctionSpec s;
    s.intrinsic_dim = j.at("k").get<std::size_t>();
    s.lipschitz = j.at("lipschitz").get<double>();
    s.epsilon = j.at("epsilon").get<double>();
    s.half_count = j.at("half_count").get<std::size_t>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.signs = j.at("signs").get<std::vector<std::int8_t>>();
    return s;
  }
  if (family == "fourier") {
    FourierSpec s;
    s.intrinsic_dim = j.at("k").get<std::size_t>();
    s.inv_eps1 = j.at("inv_eps1").get<std::size_t>();
    s.alpha = j.at("alpha").get<double>();
    s.constant_c = j.at("C").get<double>();
    s.lipschitz = j.at("lipschitz").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.signs = j.at("signs").get<std::vector<std::int8_t>>();
    return s;
  }
  throw std::invalid_argument("unknown target family: " + family);
}

// ---------------------------------------------------------------------------
// Lipschitz estimation

double estimate_lipschitz(const ScalarFunction& f, const PointSampler& sampler, std::size_t dim,
                          std::size_t num_pairs, std::uint64_t seed) {
  require(num_pairs >= 1, "estimate_lipschitz: num_pairs must be >= 1");
  constexpr double kLocalRadius = 1e-3;
  Rng rng(seed);
  std::vector<double> a(dim), b(dim);
  double best = 0.0;
  for (std::size_t p = 0; p < num_pairs; ++p) {
    sampler(rng, a);
    sampler(rng, b);
    if (p % 2 == 1) {
      const double len = distance(a, b);
      if (len > kLocalRadius) {
        for (std::size_t i = 0; i < dim; ++i) b[i] = a[i] + kLocalRadius * (b[i] - a[i]) / len;
      }
    }
    const double dist = distance(a, b);
    if (dist == 0.0) continue;
    best = std::max(best, std::abs(f(a) - f(b)) / dist);
  }
  return best;
}

// ---------------------------------------------------------------------------
// Datasets

std::string to_string(Distribution d) {
  return d == Distribution::UniformCube ? "uniform-cube" : "subspace-slice";
}

Distribution distribution_from_string(const std::string& s) {
  if (s == "uniform-cube") return Distribution::UniformCube;
  if (s == "subspace-slice") return Distribution::SubspaceSlice;
  throw std::invalid_argument("unknown distribution: " + s);
}

Dataset sample_dataset(const TargetFunction& f, std::size_t d, std::size_t n, std::uint64_t seed,
                       Distribution distribution) {
  require_dim(f.input_dim(), d, "sample_dataset");
  const SubspaceEmbedding* emb = std::get_if<SubspaceEmbedding>(&f.spec());
  if (distribution == Distribution::SubspaceSlice && emb == nullptr) {
    throw std::invalid_argument("sample_dataset: subspace-slice needs a subspace embedding");
  }
  Dataset data;
  data.inputs = RowMatrix(n, d);
  data.targets.resize(n);
  data.function = f;
  data.seed = seed;
  data.distribution = distribution;
  Rng rng(seed);
  std::vector<double> coords(emb ? emb->intrinsic_dim : 0);
  for (std::size_t r = 0; r < n; ++r) {
    auto x = data.inputs.row(r);
    if (distribution == Distribution::UniformCube) {
      for (double& v : x) v = rng.uniform(-1.0, 1.0);
    } else {
      sample_slice(emb->rows, rng, coords, x);
    }
    data.targets[r] = f(x);
  }
  return data;
}

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv) {
  auto p = csv;
  p.replace_extension(".json");
  return p;
}

void write_dataset(const Dataset& data, const std::filesystem::path& csv) {
  std::ofstream out(csv, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + csv.string());
  const std::size_t d = data.dim();
  for (std::size_t i = 0; i < d; ++i) out << 'x' << (i + 1) << ',';
  out << "y\n";
  for (std::size_t r = 0; r < data.size(); ++r) {
    for (double v : data.inputs.row(r)) out << format_double(v) << ',';
    out << format_double(data.targets[r]) << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + csv.string());

  nlohmann::json side{{"function", data.function},
                      {"params", {{"dim", d}}},
                      {"seed", data.seed},
                      {"n", data.size()},
                      {"distribution", to_string(data.distribution)}};
  std::ofstream sj(sidecar_path(csv), std::ios::binary);
  if (!sj) throw std::runtime_error("cannot write " + sidecar_path(csv).string());
  sj << side.dump(2) << '\n';
}

namespace {
double parse_double(std::string_view s, const std::string& where) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::runtime_error(where + ": bad number '" + std::string(s) + "'");
  }
  return v;
}
}  // namespace

Dataset read_dataset(const std::filesystem::path& csv) {
  std::ifstream in(csv, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + csv.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(csv.string() + ": empty file");
  const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  require(columns >= 2, csv.string() + ": need at least one input column and y");
  const std::size_t d = columns - 1;

  Dataset data;
  std::vector<double> row(d);
  std::vector<double> flat;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::size_t start = 0;
    std::size_t col = 0;
    const std::string where = csv.string() + ":" + std::to_string(line_no);
    for (;;) {
      const std::size_t comma = line.find(',', start);
      const std::string_view cell(line.data() + start,
                                  (comma == std::string::npos ? line.size() : comma) - start);
      require(col < columns, where + ": too many columns");
      const double v = parse_double(cell, where);
      if (col < d) {
        flat.push_back(v);
      } else {
        data.targets.push_back(v);
      }
      ++col;
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    require(col == columns, where + ": too few columns");
  }
  data.inputs = RowMatrix(data.targets.size(), d, std::move(flat));

  const auto side = sidecar_path(csv);
  if (std::filesystem::exists(side)) {
    std::ifstream sj(side);
    const auto j = nlohmann::json::parse(sj);
    data.function = j.value("function", nlohmann::json());
    data.seed = j.value("seed", std::uint64_t{0});
    data.distribution = distribution_from_string(j.value("distribution", "uniform-cube"));
  }
  return data;
}

}  // namespace dsm
