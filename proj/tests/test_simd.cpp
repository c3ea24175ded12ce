#include "featsense/simd/kernels.hpp"
#include "featsense/tsdf.hpp"

#include <doctest.h>

#include <bit>
#include <cstring>
#include <random>
#include <vector>

using namespace featsense;

namespace {

const simd::KernelTable& other_kernels() {
  const simd::KernelTable* avx = simd::avx2_kernels();
  return avx ? *avx : simd::scalar_kernels();
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("active kernel table honors the scalar override") {
  const char* env = std::getenv("FEATSENSE_SIMD");
  if (env && std::string(env) == "scalar") CHECK(simd::active_kernels().name == "scalar");
  MESSAGE("active kernels: " << simd::active_kernels().name);
}

TEST_CASE("weighted_sum is bit-identical across implementations") {
  const auto& ref = simd::scalar_kernels();
  const auto& alt = other_kernels();
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (std::size_t taps : {1u, 3u, 5u, 7u}) {
    for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 17u, 1024u, 1031u}) {
      std::vector<std::vector<double>> src(taps, std::vector<double>(n));
      std::vector<const double*> ptrs;
      for (auto& s : src) {
        for (double& v : s) v = u(rng);
        ptrs.push_back(s.data());
      }
      std::vector<double> w(taps);
      for (double& v : w) v = u(rng) * 1e-3;
      std::vector<double> a(n), b(n);
      ref.weighted_sum(ptrs.data(), w.data(), taps, a.data(), n);
      alt.weighted_sum(ptrs.data(), w.data(), taps, b.data(), n);
      CHECK(bit_equal(a, b));
    }
  }
}

TEST_CASE("sobel_magnitude is bit-identical across implementations") {
  const auto& ref = simd::scalar_kernels();
  const auto& alt = other_kernels();
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t n : {1u, 2u, 4u, 7u, 64u, 1021u}) {
    std::vector<double> rows[3];
    for (auto& r : rows) {
      r.resize(n + 2);
      for (double& v : r) v = u(rng);
    }
    std::vector<double> a(n), b(n);
    ref.sobel_magnitude(rows[0].data() + 1, rows[1].data() + 1, rows[2].data() + 1, a.data(), n);
    alt.sobel_magnitude(rows[0].data() + 1, rows[1].data() + 1, rows[2].data() + 1, b.data(), n);
    CHECK(bit_equal(a, b));
  }
}

TEST_CASE("integrate is bit-identical across implementations") {
  const auto& ref = simd::scalar_kernels();
  const auto& alt = other_kernels();
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> val(-32767, 32767);
  std::uniform_int_distribution<int> wt(0, 65535);
  std::uniform_int_distribution<int> small_wt(0, 4);
  for (std::uint32_t weight_max : {1u, 20u, 1024u, 65535u}) {
    for (std::size_t n : {0u, 1u, 7u, 8u, 9u, 100003u}) {
      std::vector<std::uint32_t> g(n), c(n);
      for (std::size_t i = 0; i < n; ++i) {
        const int gw = (i % 3 == 0) ? small_wt(rng) : std::min<int>(wt(rng), static_cast<int>(weight_max));
        const int cw = (i % 5 == 0) ? 0 : wt(rng) % 2048;
        g[i] = tsdf::pack({static_cast<std::int16_t>(val(rng)), static_cast<std::uint16_t>(gw)});
        c[i] = tsdf::pack({static_cast<std::int16_t>(val(rng)), static_cast<std::uint16_t>(cw)});
      }
      std::vector<std::uint32_t> a = g, b = g;
      ref.integrate(a.data(), c.data(), n, weight_max);
      alt.integrate(b.data(), c.data(), n, weight_max);
      CHECK(a == b);
    }
  }
}

TEST_CASE("integrate rounding ties go away from zero in both implementations") {
  for (const simd::KernelTable* k : {&simd::scalar_kernels(), &other_kernels()}) {
    // (1*1 + 2*1) / 2 = 1.5 -> 2 ; (-1 - 2) / 2 = -1.5 -> -2
    std::vector<std::uint32_t> g{tsdf::pack({1, 1}), tsdf::pack({-1, 1})};
    const std::vector<std::uint32_t> c{tsdf::pack({2, 1}), tsdf::pack({-2, 1})};
    k->integrate(g.data(), c.data(), 2, 1024);
    CHECK(tsdf::unpack(g[0]).value == 2);
    CHECK(tsdf::unpack(g[1]).value == -2);
  }
}
