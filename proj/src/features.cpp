#include "featsense/features.hpp"

#include "featsense/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace featsense::features {

namespace {

std::uint32_t wrap_col(std::int64_t c, std::uint32_t cols) {
  const auto n = static_cast<std::int64_t>(cols);
  return static_cast<std::uint32_t>(((c % n) + n) % n);
}

bool neighborhood_valid(const StructuredScan& scan, std::uint32_t row, std::uint32_t col, int half) {
  for (int k = -half; k <= half; ++k)
    if (!scan.is_valid(row, wrap_col(static_cast<std::int64_t>(col) + k, scan.cols))) return false;
  return true;
}

}  // namespace

double raw_curvature(const StructuredScan& scan, std::uint32_t row, std::uint32_t col, int half_window) {
  const Vec3& center = scan.point(row, col);
  Vec3 sum = Vec3::Zero();
  for (int k = 1; k <= half_window; ++k) {
    sum += scan.point(row, wrap_col(static_cast<std::int64_t>(col) - k, scan.cols));
    sum += scan.point(row, wrap_col(static_cast<std::int64_t>(col) + k, scan.cols));
  }
  const Vec3 dev = sum - (2.0 * half_window) * center;
  return dev.squaredNorm();
}

CurvatureGrid compute_curvature(const StructuredScan& scan, int half_window) {
  if (half_window < 1) throw Error(Errc::DimensionMismatch, "half_window must be >= 1");
  CurvatureGrid grid;
  grid.rows = scan.rows;
  grid.cols = scan.cols;
  grid.c.assign(scan.size(), 0.0);
  grid.valid.assign(scan.size(), 0);
  if (scan.cols < static_cast<std::uint32_t>(2 * half_window + 1)) return grid;
  const double set_size = 2.0 * half_window;
  for (std::uint32_t r = 0; r < scan.rows; ++r) {
    for (std::uint32_t c = 0; c < scan.cols; ++c) {
      if (!neighborhood_valid(scan, r, c, half_window)) continue;
      const double range = scan.range(r, c);
      const std::size_t idx = scan.index(r, c);
      grid.c[idx] = raw_curvature(scan, r, c, half_window) / (set_size * set_size * range * range);
      grid.valid[idx] = 1;
    }
  }
  return grid;
}

bool parallel_beam_test(const StructuredScan& scan, std::uint32_t row, std::uint32_t col,
                        double angle_threshold_deg) {
  const Vec3& p = scan.point(row, col);
  const Vec3& prev = scan.point(row, wrap_col(static_cast<std::int64_t>(col) - 1, scan.cols));
  const Vec3& next = scan.point(row, wrap_col(static_cast<std::int64_t>(col) + 1, scan.cols));
  const Vec3 tangent = next - prev;
  const double tn = tangent.norm();
  const double pn = p.norm();
  if (!(tn > 0.0) || !(pn > 0.0)) return true;
  const double cosang = std::min(1.0, std::abs(tangent.dot(p)) / (tn * pn));
  const double angle_deg = std::acos(cosang) * 180.0 / std::numbers::pi;
  return angle_deg < angle_threshold_deg;
}

bool occlusion_test(const StructuredScan& scan, std::uint32_t row, std::uint32_t col, double gap_threshold) {
  const double r = scan.range(row, col);
  for (int d : {-1, 1}) {
    const std::uint32_t nc = wrap_col(static_cast<std::int64_t>(col) + d, scan.cols);
    if (!scan.is_valid(row, nc)) continue;
    if (r - scan.range(row, nc) > gap_threshold) return true;
  }
  return false;
}

FeatureCloud classify_features(const StructuredScan& scan, const CurvatureGrid& curv,
                               const image::EdgeMask& mask, const FeatureParams& params) {
  if (curv.rows != scan.rows || curv.cols != scan.cols || mask.rows != scan.rows || mask.cols != scan.cols)
    throw Error(Errc::DimensionMismatch, "classify_features: grids not aligned with scan");
  FeatureCloud cloud;
  cloud.timestamp = scan.timestamp;
  const std::uint32_t cols = scan.cols;
  const auto n_sub = static_cast<std::uint32_t>(std::max(1, params.n_subregions));

  struct Selected {
    std::uint32_t col;
    bool edge;
  };
  std::vector<std::uint8_t> suppressed(cols);
  std::vector<std::uint32_t> order;
  std::vector<Selected> selected;

  auto suppress = [&](std::uint32_t col) {
    for (int k = -params.suppress_radius; k <= params.suppress_radius; ++k)
      suppressed[wrap_col(static_cast<std::int64_t>(col) + k, cols)] = 1;
  };

  for (std::uint32_t r = 0; r < scan.rows; ++r) {
    std::fill(suppressed.begin(), suppressed.end(), std::uint8_t{0});
    selected.clear();
    for (std::uint32_t s = 0; s < n_sub; ++s) {
      const std::uint32_t begin = cols * s / n_sub;
      const std::uint32_t end = cols * (s + 1) / n_sub;
      order.clear();
      for (std::uint32_t c = begin; c < end; ++c)
        if (curv.is_valid(r, c)) order.push_back(c);
      // Descending curvature, column index breaks ties.
      std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        const double ca = curv.at(r, a), cb = curv.at(r, b);
        return ca != cb ? ca > cb : a < b;
      });

      int n_edges = 0;
      for (std::uint32_t c : order) {
        if (n_edges >= params.max_edges_per_subregion) break;
        const double cv = curv.at(r, c);
        if (!(cv > params.edge_min)) break;
        if (cv > params.edge_max || suppressed[c]) continue;
        if (occlusion_test(scan, r, c, params.occlusion_gap)) continue;
        selected.push_back({c, true});
        suppress(c);
        ++n_edges;
      }

      int n_surf = 0;
      for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if (n_surf >= params.max_surf_per_subregion) break;
        const std::uint32_t c = *it;
        if (!(curv.at(r, c) < params.surf_max)) break;
        if (suppressed[c]) continue;
        if (parallel_beam_test(scan, r, c, params.parallel_angle_deg)) continue;
        if (occlusion_test(scan, r, c, params.occlusion_gap)) continue;
        selected.push_back({c, false});
        suppress(c);
        ++n_surf;
      }
    }

    std::sort(selected.begin(), selected.end(), [](const Selected& a, const Selected& b) { return a.col < b.col; });
    for (const Selected& sel : selected) {
      if (params.intensity_fusion && mask.at(r, sel.col) != sel.edge) continue;
      FeaturePoint fp{scan.point(r, sel.col), curv.at(r, sel.col), r, sel.col};
      (sel.edge ? cloud.edges : cloud.surfaces).push_back(fp);
    }
  }
  return cloud;
}

}  // namespace featsense::features
