#include "featsense/simd/kernels.hpp"

#include <cstdlib>
#include <string_view>

namespace featsense::simd {

#ifndef FEATSENSE_BUILD_AVX2
const KernelTable* avx2_kernels() { return nullptr; }
#endif

const KernelTable& active_kernels() {
  static const KernelTable& table = [&]() -> const KernelTable& {
    const char* force = std::getenv("FEATSENSE_SIMD");
    if (force != nullptr && std::string_view(force) == "scalar") return scalar_kernels();
    if (const KernelTable* t = avx2_kernels()) return *t;
    return scalar_kernels();
  }();
  return table;
}

}  // namespace featsense::simd
