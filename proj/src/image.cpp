#include "featsense/image.hpp"

#include "featsense/error.hpp"
#include "featsense/simd/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace featsense::image {

namespace {

void check_kernel(int ksize, double sigma, const char* what) {
  if (ksize < 1 || ksize % 2 == 0)
    throw Error(Errc::BadKernel, std::string(what) + ": kernel size must be odd and >= 1");
  if (!(sigma > 0.0)) throw Error(Errc::BadKernel, std::string(what) + ": sigma must be > 0");
}

std::size_t wrap(std::ptrdiff_t c, std::size_t cols) {
  const auto n = static_cast<std::ptrdiff_t>(cols);
  return static_cast<std::size_t>(((c % n) + n) % n);
}

std::size_t clamp_row(std::ptrdiff_t r, std::size_t rows) {
  return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(r, 0, static_cast<std::ptrdiff_t>(rows) - 1));
}

// Row copy with `pad` wrapped columns on each side.
void padded_row(const IntensityImage& img, std::size_t r, std::size_t pad, std::vector<double>& out) {
  out.resize(img.cols + 2 * pad);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = img.at(r, wrap(static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(pad), img.cols));
}

void clamp_to_range(IntensityImage& img, double lo, double hi) {
  for (double& p : img.pixels) p = std::clamp(p, lo, hi);
}

std::pair<double, double> min_max(const IntensityImage& img) {
  const auto [lo, hi] = std::minmax_element(img.pixels.begin(), img.pixels.end());
  return {*lo, *hi};
}

}  // namespace

std::size_t EdgeMask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

std::vector<double> gaussian_kernel(double sigma, int ksize) {
  check_kernel(ksize, sigma, "gaussian_kernel");
  const int half = ksize / 2;
  std::vector<double> w(static_cast<std::size_t>(ksize));
  double sum = 0.0;
  for (int k = -half; k <= half; ++k) {
    w[static_cast<std::size_t>(k + half)] = std::exp(-(k * k) / (2.0 * sigma * sigma));
    sum += w[static_cast<std::size_t>(k + half)];
  }
  for (double& x : w) x /= sum;
  return w;
}

IntensityImage gaussian_blur(const IntensityImage& img, double sigma, int ksize) {
  check_kernel(ksize, sigma, "gaussian_blur");
  if (ksize == 1 || img.pixels.empty()) return img;
  const auto& kern = simd::active_kernels();
  const std::vector<double> w = gaussian_kernel(sigma, ksize);
  const std::size_t half = static_cast<std::size_t>(ksize / 2);
  const std::size_t taps = w.size();

  // Horizontal pass with cyclic columns.
  IntensityImage tmp(img.rows, img.cols);
  std::vector<double> padded;
  std::vector<const double*> src(taps);
  for (std::size_t r = 0; r < img.rows; ++r) {
    padded_row(img, r, half, padded);
    for (std::size_t k = 0; k < taps; ++k) src[k] = padded.data() + k;
    kern.weighted_sum(src.data(), w.data(), taps, &tmp.pixels[r * img.cols], img.cols);
  }

  // Vertical pass with replicated rows.
  IntensityImage out(img.rows, img.cols);
  for (std::size_t r = 0; r < img.rows; ++r) {
    for (std::size_t k = 0; k < taps; ++k) {
      const std::size_t rr = clamp_row(static_cast<std::ptrdiff_t>(r + k) - static_cast<std::ptrdiff_t>(half), img.rows);
      src[k] = &tmp.pixels[rr * img.cols];
    }
    kern.weighted_sum(src.data(), w.data(), taps, &out.pixels[r * img.cols], img.cols);
  }
  const auto [lo, hi] = min_max(img);
  clamp_to_range(out, lo, hi);
  return out;
}

IntensityImage normalize_histogram(const IntensityImage& img) {
  IntensityImage out(img.rows, img.cols);
  if (img.pixels.empty()) return out;
  const auto [lo, hi] = min_max(img);
  if (!(hi > lo)) return out;
  const double range = hi - lo;
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    out.pixels[i] = std::clamp((img.pixels[i] - lo) / range, 0.0, 1.0);
  return out;
}

IntensityImage bilateral_filter(const IntensityImage& img, double sigma_space, double sigma_range,
                                int ksize) {
  check_kernel(ksize, sigma_space, "bilateral_filter");
  if (!(sigma_range > 0.0)) throw Error(Errc::BadKernel, "bilateral_filter: sigma_range must be > 0");
  if (ksize == 1 || img.pixels.empty()) return img;
  const int half = ksize / 2;
  std::vector<double> spatial(static_cast<std::size_t>(ksize * ksize));
  for (int dr = -half; dr <= half; ++dr)
    for (int dc = -half; dc <= half; ++dc)
      spatial[static_cast<std::size_t>((dr + half) * ksize + dc + half)] =
          std::exp(-(dr * dr + dc * dc) / (2.0 * sigma_space * sigma_space));
  const double range_scale = -1.0 / (2.0 * sigma_range * sigma_range);

  IntensityImage out(img.rows, img.cols);
  for (std::size_t r = 0; r < img.rows; ++r) {
    for (std::size_t c = 0; c < img.cols; ++c) {
      const double center = img.at(r, c);
      double acc = 0.0;
      double norm = 0.0;
      for (int dr = -half; dr <= half; ++dr) {
        const std::size_t rr = clamp_row(static_cast<std::ptrdiff_t>(r) + dr, img.rows);
        for (int dc = -half; dc <= half; ++dc) {
          const double v = img.at(rr, wrap(static_cast<std::ptrdiff_t>(c) + dc, img.cols));
          const double diff = v - center;
          const double w = spatial[static_cast<std::size_t>((dr + half) * ksize + dc + half)] *
                           std::exp(diff * diff * range_scale);
          acc += w * v;
          norm += w;
        }
      }
      out.at(r, c) = acc / norm;
    }
  }
  const auto [lo, hi] = min_max(img);
  clamp_to_range(out, lo, hi);
  return out;
}

EdgeMask sobel_edges(const IntensityImage& img, double threshold) {
  EdgeMask mask(img.rows, img.cols);
  if (img.rows < 3 || img.cols < 3) return mask;
  const auto& kern = simd::active_kernels();
  std::vector<double> above, mid, below;
  std::vector<double> mag(img.cols);
  for (std::size_t r = 1; r + 1 < img.rows; ++r) {
    padded_row(img, r - 1, 1, above);
    padded_row(img, r, 1, mid);
    padded_row(img, r + 1, 1, below);
    kern.sobel_magnitude(above.data() + 1, mid.data() + 1, below.data() + 1, mag.data(), img.cols);
    for (std::size_t c = 1; c + 1 < img.cols; ++c)
      mask.bits[r * img.cols + c] = mag[c] > threshold ? 1 : 0;
  }
  return mask;
}

IntensityImage intensity_image(const StructuredScan& scan) {
  IntensityImage img(scan.rows, scan.cols);
  for (std::size_t i = 0; i < scan.size(); ++i)
    img.pixels[i] = scan.valid[i] ? std::clamp(scan.intensity[i], 0.0, 1.0) : 0.0;
  return img;
}

EdgeMask intensity_edge_mask(const StructuredScan& scan, const ImagePipelineParams& params) {
  const IntensityImage raw = intensity_image(scan);
  const IntensityImage blurred = gaussian_blur(raw, params.gauss_sigma, params.gauss_ksize);
  const IntensityImage normalized = normalize_histogram(blurred);
  const IntensityImage smoothed = bilateral_filter(normalized, params.bilateral_sigma_space,
                                                   params.bilateral_sigma_range, params.bilateral_ksize);
  EdgeMask mask = sobel_edges(smoothed, params.sobel_threshold);
  if (!params.debug_dir.empty()) {
    std::filesystem::create_directories(params.debug_dir);
    char stem[64];
    std::snprintf(stem, sizeof(stem), "%.6f", scan.timestamp);
    write_pgm(raw, params.debug_dir / (std::string(stem) + "_0raw.pgm"));
    write_pgm(blurred, params.debug_dir / (std::string(stem) + "_1gauss.pgm"));
    write_pgm(normalized, params.debug_dir / (std::string(stem) + "_2norm.pgm"));
    write_pgm(smoothed, params.debug_dir / (std::string(stem) + "_3bilateral.pgm"));
    write_pgm(mask, params.debug_dir / (std::string(stem) + "_4sobel.pgm"));
  }
  return mask;
}

void write_pgm(const IntensityImage& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out << "P5\n" << img.cols << ' ' << img.rows << "\n255\n";
  for (double p : img.pixels)
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(p, 0.0, 1.0) * 255.0))));
}

void write_pgm(const EdgeMask& mask, const std::filesystem::path& path) {
  IntensityImage img(mask.rows, mask.cols);
  for (std::size_t i = 0; i < mask.bits.size(); ++i) img.pixels[i] = mask.bits[i] ? 1.0 : 0.0;
  write_pgm(img, path);
}

}  // namespace featsense::image
