#include "dsm/matrix.hpp"

#include <cmath>

namespace dsm {

double norm2(std::span<const double> a) noexcept { return std::sqrt(dot(a, a)); }

double distance(std::span<const double> a, std::span<const double> b) noexcept {
  return std::sqrt(squared_distance(a, b));
}

}  // namespace dsm
