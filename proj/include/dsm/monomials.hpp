#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace dsm {

/// Exponent vector of a monomial, one entry per variable.
using MultiIndex = std::vector<std::uint32_t>;

/// Number of monomials in `dim` variables with total degree <= `degree`,
/// i.e. C(dim + degree, degree). Saturates at UINT64_MAX.
std::uint64_t monomial_count(std::size_t dim, unsigned degree) noexcept;

/// All multi-indices of total degree <= `degree`, in graded order
/// (degree 0 first, then lexicographically descending within a degree).
std::vector<MultiIndex> enumerate_monomials(std::size_t dim, unsigned degree);

/// Maps a `dim`-subset of {0, ..., dim + degree - 1} (sorted ascending, the
/// bar positions) to the multi-index it encodes under stars and bars. Used to sample monomials
/// uniformly without enumerating them.
MultiIndex multi_index_from_bars(std::span<const std::uint32_t> bars, std::size_t dim,
                                 unsigned degree);

double monomial_value(const MultiIndex& exponents, std::span<const double> x) noexcept;

unsigned total_degree(const MultiIndex& exponents) noexcept;

}  // namespace dsm
