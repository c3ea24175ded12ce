#pragma once

#include "featsense/types.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace featsense {

/// Range/intensity returns on a rows x cols grid (row = scan line, col =
/// azimuth step), row-major. Row 0 is the top scan line.
struct StructuredScan {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<Vec3> points;
  std::vector<double> intensity;  // normalized to [0,1]
  std::vector<std::uint8_t> valid;
  double timestamp = 0.0;
  double vfov_deg = 0.0;
  double max_intensity = 1.0;  // sensor-declared maximum used for normalization

  static StructuredScan empty(std::uint32_t rows, std::uint32_t cols, double vfov_deg,
                              double timestamp = 0.0);

  std::size_t size() const { return points.size(); }
  std::size_t index(std::uint32_t row, std::uint32_t col) const {
    return static_cast<std::size_t>(row) * cols + col;
  }
  bool is_valid(std::uint32_t row, std::uint32_t col) const { return valid[index(row, col)] != 0; }
  const Vec3& point(std::uint32_t row, std::uint32_t col) const { return points[index(row, col)]; }
  double range(std::uint32_t row, std::uint32_t col) const { return point(row, col).norm(); }
  std::size_t valid_count() const;

  /// Checks the grid invariants, throws Error(DimensionMismatch) on violation.
  void check() const;
};

/// A point of an unordered cloud.
struct RawPoint {
  Vec3 position;
  double intensity = 0.0;
};

/// Grid geometry shared by the simulator and the reordering step. Elevation of
/// row r is vfov/2 - (r + 0.5) * vfov/rows; azimuth of column c is
/// -pi + c * 2pi/cols.
double row_elevation_rad(std::uint32_t row, std::uint32_t rows, double vfov_deg);
double col_azimuth_rad(std::uint32_t col, std::uint32_t cols);
Vec3 cell_direction(std::uint32_t row, std::uint32_t col, std::uint32_t rows, std::uint32_t cols,
                    double vfov_deg);

StructuredScan read_scan(const std::filesystem::path& path);
void write_scan(const StructuredScan& scan, const std::filesystem::path& path);

/// Rebuilds a structured grid from an unordered cloud by binning elevation
/// (scan line) and azimuth (column). Nearer points win bin collisions.
StructuredScan order_by_vertical_angle(std::span<const RawPoint> cloud, std::uint32_t rows,
                                       std::uint32_t cols, double vfov_deg,
                                       double timestamp = 0.0);

/// Flattens the valid cells of a scan.
std::vector<RawPoint> flatten(const StructuredScan& scan);
std::vector<Vec3> valid_points(const StructuredScan& scan);

Trajectory read_trajectory(const std::filesystem::path& path);
void write_trajectory(const Trajectory& traj, const std::filesystem::path& path);
void check_trajectory(const Trajectory& traj);

}  // namespace featsense
