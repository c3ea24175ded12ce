#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace featsense::simd {

/// Data-parallel inner loops. Every implementation of a slot must produce
/// bit-identical output to the scalar reference for the same input.
struct KernelTable {
  std::string_view name;

  /// out[i] = sum_k weights[k] * sources[k][i], accumulated in k order.
  void (*weighted_sum)(const double* const* sources, const double* weights, std::size_t taps,
                       double* out, std::size_t n);

  /// 3x3 Sobel gradient magnitude for n consecutive pixels. `above`, `mid`,
  /// `below` point at the first output column; element [-1] and [n] must be
  /// readable.
  void (*sobel_magnitude)(const double* above, const double* mid, const double* below, double* out,
                          std::size_t n);

  /// Weighted TSDF average of packed (value:i16 << 16 | weight:u16) words.
  /// Candidates with weight 0 leave the global word untouched.
  void (*integrate)(std::uint32_t* global, const std::uint32_t* candidate, std::size_t n,
                    std::uint32_t weight_max);
};

const KernelTable& scalar_kernels();

/// AVX2 table, or nullptr when not compiled in or unsupported by the CPU.
const KernelTable* avx2_kernels();

/// Best table for this host. FEATSENSE_SIMD=scalar forces the reference path.
const KernelTable& active_kernels();

}  // namespace featsense::simd
