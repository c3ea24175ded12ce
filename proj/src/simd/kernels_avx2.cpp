#include "featsense/simd/kernels.hpp"

#include <immintrin.h>

#include <cmath>
#include <cstdlib>

namespace featsense::simd {

namespace {

void weighted_sum_avx2(const double* const* sources, const double* weights, std::size_t taps,
                       double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t k = 0; k < taps; ++k) {
      const __m256d w = _mm256_set1_pd(weights[k]);
      acc = _mm256_add_pd(acc, _mm256_mul_pd(w, _mm256_loadu_pd(sources[k] + i)));
    }
    _mm256_storeu_pd(out + i, acc);
  }
  for (; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < taps; ++k) acc = acc + weights[k] * sources[k][i];
    out[i] = acc;
  }
}

void sobel_magnitude_avx2(const double* above, const double* mid, const double* below, double* out,
                          std::size_t n) {
  const __m256d two = _mm256_set1_pd(2.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d al = _mm256_loadu_pd(above + i - 1);
    const __m256d ac = _mm256_loadu_pd(above + i);
    const __m256d ar = _mm256_loadu_pd(above + i + 1);
    const __m256d ml = _mm256_loadu_pd(mid + i - 1);
    const __m256d mr = _mm256_loadu_pd(mid + i + 1);
    const __m256d bl = _mm256_loadu_pd(below + i - 1);
    const __m256d bc = _mm256_loadu_pd(below + i);
    const __m256d br = _mm256_loadu_pd(below + i + 1);
    const __m256d gx = _mm256_add_pd(
        _mm256_add_pd(_mm256_sub_pd(ar, al), _mm256_mul_pd(two, _mm256_sub_pd(mr, ml))),
        _mm256_sub_pd(br, bl));
    const __m256d gy = _mm256_sub_pd(
        _mm256_add_pd(_mm256_add_pd(bl, _mm256_mul_pd(two, bc)), br),
        _mm256_add_pd(_mm256_add_pd(al, _mm256_mul_pd(two, ac)), ar));
    _mm256_storeu_pd(out + i,
                     _mm256_sqrt_pd(_mm256_add_pd(_mm256_mul_pd(gx, gx), _mm256_mul_pd(gy, gy))));
  }
  for (; i < n; ++i) {
    const std::ptrdiff_t c = static_cast<std::ptrdiff_t>(i);
    const double gx = (above[c + 1] - above[c - 1]) + 2.0 * (mid[c + 1] - mid[c - 1]) +
                      (below[c + 1] - below[c - 1]);
    const double gy = (below[c - 1] + 2.0 * below[c] + below[c + 1]) -
                      (above[c - 1] + 2.0 * above[c] + above[c + 1]);
    out[i] = std::sqrt(gx * gx + gy * gy);
  }
}

// Floating-point route: products and sums of 16-bit operands are exact in
// double, and the correctly rounded quotient is never close enough to a
// half-integer to flip the rounding (den < 2^17, |q| < 2^15).
__m256d round_half_away(__m256d q) {
  const __m256d sign_mask = _mm256_set1_pd(-0.0);
  const __m256d mag = _mm256_andnot_pd(sign_mask, q);
  const __m256d rounded = _mm256_floor_pd(_mm256_add_pd(mag, _mm256_set1_pd(0.5)));
  return _mm256_or_pd(rounded, _mm256_and_pd(sign_mask, q));
}

__m128i average_half(__m128i gv, __m128i gw, __m128i cv, __m128i cw) {
  const __m256d gvd = _mm256_cvtepi32_pd(gv);
  const __m256d gwd = _mm256_cvtepi32_pd(gw);
  const __m256d cvd = _mm256_cvtepi32_pd(cv);
  const __m256d cwd = _mm256_cvtepi32_pd(cw);
  const __m256d num = _mm256_add_pd(_mm256_mul_pd(gvd, gwd), _mm256_mul_pd(cvd, cwd));
  const __m256d den = _mm256_add_pd(gwd, cwd);
  // Lanes with den == 0 are masked out by the caller; avoid 0/0 anyway.
  const __m256d safe_den = _mm256_max_pd(den, _mm256_set1_pd(1.0));
  return _mm256_cvtpd_epi32(round_half_away(_mm256_div_pd(num, safe_den)));
}

void integrate_avx2(std::uint32_t* global, const std::uint32_t* candidate, std::size_t n,
                    std::uint32_t weight_max) {
  const __m256i low16 = _mm256_set1_epi32(0xFFFF);
  const __m256i wmax = _mm256_set1_epi32(static_cast<int>(weight_max));
  const __m256i zero = _mm256_setzero_si256();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256i c = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(candidate + i));
    const __m256i g = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(global + i));
    const __m256i cw = _mm256_and_si256(c, low16);
    const __m256i skip = _mm256_cmpeq_epi32(cw, zero);
    if (_mm256_movemask_epi8(skip) == -1) continue;
    const __m256i cv = _mm256_srai_epi32(c, 16);
    const __m256i gw = _mm256_and_si256(g, low16);
    const __m256i gv = _mm256_srai_epi32(g, 16);

    const __m128i lo = average_half(_mm256_castsi256_si128(gv), _mm256_castsi256_si128(gw),
                                    _mm256_castsi256_si128(cv), _mm256_castsi256_si128(cw));
    const __m128i hi = average_half(_mm256_extracti128_si256(gv, 1), _mm256_extracti128_si256(gw, 1),
                                    _mm256_extracti128_si256(cv, 1), _mm256_extracti128_si256(cw, 1));
    const __m256i value = _mm256_set_m128i(hi, lo);
    const __m256i weight = _mm256_min_epi32(_mm256_add_epi32(gw, cw), wmax);
    const __m256i packed = _mm256_or_si256(_mm256_slli_epi32(value, 16), weight);
    const __m256i result = _mm256_blendv_epi8(packed, g, skip);
    _mm256_storeu_si256(reinterpret_cast<__m256i*>(global + i), result);
  }
  if (i < n) scalar_kernels().integrate(global + i, candidate + i, n - i, weight_max);
}

}  // namespace

const KernelTable* avx2_kernels() {
  static const bool supported = __builtin_cpu_supports("avx2");
  static const KernelTable table{"avx2", weighted_sum_avx2, sobel_magnitude_avx2, integrate_avx2};
  return supported ? &table : nullptr;
}

}  // namespace featsense::simd
