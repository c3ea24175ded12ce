#include "featsense/simd/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

namespace featsense::simd {

namespace {

void weighted_sum_scalar(const double* const* sources, const double* weights, std::size_t taps,
                         double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < taps; ++k) acc = acc + weights[k] * sources[k][i];
    out[i] = acc;
  }
}

void sobel_magnitude_scalar(const double* above, const double* mid, const double* below, double* out,
                            std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const std::ptrdiff_t c = static_cast<std::ptrdiff_t>(i);
    const double gx = (above[c + 1] - above[c - 1]) + 2.0 * (mid[c + 1] - mid[c - 1]) +
                      (below[c + 1] - below[c - 1]);
    const double gy = (below[c - 1] + 2.0 * below[c] + below[c + 1]) -
                      (above[c - 1] + 2.0 * above[c] + above[c + 1]);
    out[i] = std::sqrt(gx * gx + gy * gy);
  }
}

// Integer route: round half away from zero on the exact quotient.
void integrate_scalar(std::uint32_t* global, const std::uint32_t* candidate, std::size_t n,
                      std::uint32_t weight_max) {
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t c = candidate[i];
    const std::int64_t cw = c & 0xFFFFu;
    if (cw == 0) continue;
    const std::int64_t cv = static_cast<std::int16_t>(c >> 16);
    const std::uint32_t g = global[i];
    const std::int64_t gw = g & 0xFFFFu;
    const std::int64_t gv = static_cast<std::int16_t>(g >> 16);
    const std::int64_t num = gv * gw + cv * cw;
    const std::int64_t den = gw + cw;
    const std::int64_t mag = (2 * std::llabs(num) + den) / (2 * den);
    const std::int64_t value = num < 0 ? -mag : mag;
    const std::int64_t weight = std::min<std::int64_t>(weight_max, den);
    global[i] = (static_cast<std::uint32_t>(static_cast<std::uint16_t>(value)) << 16) |
                static_cast<std::uint32_t>(weight);
  }
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{"scalar", weighted_sum_scalar, sobel_magnitude_scalar,
                                 integrate_scalar};
  return table;
}

}  // namespace featsense::simd
