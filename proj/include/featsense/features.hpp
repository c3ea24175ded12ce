#pragma once

#include "featsense/image.hpp"
#include "featsense/scan_io.hpp"

#include <cstdint>
#include <vector>

namespace featsense::features {

struct CurvatureGrid {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<double> c;
  std::vector<std::uint8_t> valid;

  double at(std::uint32_t r, std::uint32_t col) const { return c[static_cast<std::size_t>(r) * cols + col]; }
  bool is_valid(std::uint32_t r, std::uint32_t col) const {
    return valid[static_cast<std::size_t>(r) * cols + col] != 0;
  }
};

struct FeaturePoint {
  Vec3 point;  // sensor frame
  double curvature = 0.0;
  std::uint32_t row = 0;
  std::uint32_t col = 0;
};

struct FeatureCloud {
  std::vector<FeaturePoint> edges;
  std::vector<FeaturePoint> surfaces;
  double timestamp = 0.0;
};

struct FeatureParams {
  int half_window = 5;
  int n_subregions = 6;
  double edge_min = 0.1;
  double edge_max = 10.0;
  double surf_max = 0.05;
  int max_edges_per_subregion = 4;
  int max_surf_per_subregion = 8;
  int suppress_radius = 5;
  double parallel_angle_deg = 10.0;
  double occlusion_gap = 0.5;
  bool intensity_fusion = true;
};

/// Neighborhood deviation |sum_{j != i} P_j - |S| P_i|^2 over the
/// 2*half_window horizontal neighbors (cyclic columns), without range
/// normalization. Requires a fully valid neighborhood.
double raw_curvature(const StructuredScan& scan, std::uint32_t row, std::uint32_t col, int half_window);

/// Curvature normalized by (|S| * range)^2; cells with any invalid neighbor
/// are marked invalid.
CurvatureGrid compute_curvature(const StructuredScan& scan, int half_window);

/// True when the local tangent (from the +-1 column neighbors) is within
/// angle_threshold of the beam direction.
bool parallel_beam_test(const StructuredScan& scan, std::uint32_t row, std::uint32_t col,
                        double angle_threshold_deg);

/// True when the cell lies on the far side of a range jump larger than
/// gap_threshold to one of its horizontal neighbors.
bool occlusion_test(const StructuredScan& scan, std::uint32_t row, std::uint32_t col, double gap_threshold);

/// Subregion selection with suppression, rejection rules and intensity fusion.
/// Output ordering is row-major.
FeatureCloud classify_features(const StructuredScan& scan, const CurvatureGrid& curv,
                               const image::EdgeMask& mask, const FeatureParams& params);

}  // namespace featsense::features
