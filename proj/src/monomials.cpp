#include "dsm/monomials.hpp"

#include <limits>
#include <numeric>

#include "dsm/error.hpp"

namespace dsm {

std::uint64_t monomial_count(std::size_t dim, unsigned degree) noexcept {
  // C(dim + degree, degree) built incrementally; each partial product is an
  // exact binomial coefficient so the division is exact.
  std::uint64_t c = 1;
  for (unsigned i = 1; i <= degree; ++i) {
    const std::uint64_t num = dim + i;
    if (c > std::numeric_limits<std::uint64_t>::max() / num) {
      return std::numeric_limits<std::uint64_t>::max();
    }
    c = c * num / i;
  }
  return c;
}

namespace {

void enumerate_fixed_degree(std::size_t dim, unsigned remaining, std::size_t var,
                            MultiIndex& current, std::vector<MultiIndex>& out) {
  if (var + 1 == dim) {
    current[var] = remaining;
    out.push_back(current);
    current[var] = 0;
    return;
  }
  for (unsigned e = remaining + 1; e-- > 0;) {
    current[var] = e;
    enumerate_fixed_degree(dim, remaining - e, var + 1, current, out);
  }
  current[var] = 0;
}

}  // namespace

std::vector<MultiIndex> enumerate_monomials(std::size_t dim, unsigned degree) {
  require(dim >= 1, "enumerate_monomials: dim must be >= 1");
  std::vector<MultiIndex> out;
  MultiIndex current(dim, 0);
  for (unsigned deg = 0; deg <= degree; ++deg) {
    enumerate_fixed_degree(dim, deg, 0, current, out);
  }
  return out;
}

MultiIndex multi_index_from_bars(std::span<const std::uint32_t> bars, std::size_t dim,
                                 unsigned degree) {
  require_dim(dim, bars.size(), "multi_index_from_bars");
  MultiIndex e(dim, 0);
  std::uint32_t prev = 0;
  for (std::size_t i = 0; i < dim; ++i) {
    require(bars[i] < dim + degree && (i == 0 || bars[i] > bars[i - 1]),
            "multi_index_from_bars: bars must be strictly increasing and in range");
    e[i] = (i == 0) ? bars[0] : bars[i] - prev - 1;
    prev = bars[i];
  }
  return e;
}

double monomial_value(const MultiIndex& exponents, std::span<const double> x) noexcept {
  double v = 1.0;
  for (std::size_t i = 0; i < exponents.size(); ++i) {
    for (std::uint32_t p = 0; p < exponents[i]; ++p) v *= x[i];
  }
  return v;
}

unsigned total_degree(const MultiIndex& exponents) noexcept {
  return std::accumulate(exponents.begin(), exponents.end(), 0u);
}

}  // namespace dsm
