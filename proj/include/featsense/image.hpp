#pragma once

#include "featsense/scan_io.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace featsense::image {

/// Panorama image aligned with the scan grid. Columns are cyclic (azimuth),
/// rows are clamped at the borders.
struct IntensityImage {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> pixels;

  IntensityImage() = default;
  IntensityImage(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), pixels(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return pixels[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return pixels[r * cols + c]; }
};

struct EdgeMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> bits;

  EdgeMask() = default;
  EdgeMask(std::size_t r, std::size_t c, bool fill = false) : rows(r), cols(c), bits(r * c, fill ? 1 : 0) {}

  bool at(std::size_t r, std::size_t c) const { return bits[r * cols + c] != 0; }
  std::size_t count() const;
};

struct ImagePipelineParams {
  double gauss_sigma = 1.0;
  int gauss_ksize = 5;
  double bilateral_sigma_space = 2.0;
  double bilateral_sigma_range = 0.1;
  int bilateral_ksize = 5;
  double sobel_threshold = 0.5;
  std::filesystem::path debug_dir;  // empty disables PGM dumps
};

/// Normalized 1-D Gaussian taps of length ksize.
std::vector<double> gaussian_kernel(double sigma, int ksize);

IntensityImage gaussian_blur(const IntensityImage& img, double sigma, int ksize);

/// Min-max contrast stretch to [0,1]; constant images map to zero.
IntensityImage normalize_histogram(const IntensityImage& img);

IntensityImage bilateral_filter(const IntensityImage& img, double sigma_space, double sigma_range,
                                int ksize);

/// Gradient magnitude > threshold; the one-pixel frame is always false.
EdgeMask sobel_edges(const IntensityImage& img, double threshold);

/// Intensity grid of a scan, invalid cells set to 0.
IntensityImage intensity_image(const StructuredScan& scan);

/// blur -> normalize -> bilateral -> sobel on the scan's intensity channel.
EdgeMask intensity_edge_mask(const StructuredScan& scan, const ImagePipelineParams& params);

void write_pgm(const IntensityImage& img, const std::filesystem::path& path);
void write_pgm(const EdgeMask& mask, const std::filesystem::path& path);

}  // namespace featsense::image
