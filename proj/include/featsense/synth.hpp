#pragma once

#include "featsense/scan_io.hpp"
#include "featsense/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

namespace featsense::synth {

/// Infinite plane n . x = d.
struct Plane {
  Vec3 normal = Vec3::UnitZ();
  double d = 0.0;
};

/// Axis-aligned box; rays hit the first face crossed, so a sensor inside sees
/// the walls of a room.
struct Box {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Ones();
};

/// Vertical capped cylinder.
struct Cylinder {
  double cx = 0.0, cy = 0.0, radius = 0.1;
  double zmin = 0.0, zmax = 1.0;
};

struct Primitive {
  std::variant<Plane, Box, Cylinder> shape;
  double intensity = 0.5;
};

struct Scene {
  std::vector<Primitive> primitives;

  Scene& add(Plane p, double intensity);
  Scene& add(Box b, double intensity);
  Scene& add(Cylinder c, double intensity);
  void check() const;
};

struct SensorParams {
  std::uint32_t rows = 16;
  std::uint32_t cols = 1024;
  double vfov_deg = 30.0;
  double max_range = 100.0;
  /// Rounds points and intensities to float so a written and reread scan is
  /// bit-identical to the in-memory one.
  bool quantize_f32 = true;
};

struct NoiseParams {
  double range_sigma = 0.0;
  double intensity_sigma = 0.0;
  std::uint64_t seed = 1;
};

struct Hit {
  double t = 0.0;
  Vec3 normal = Vec3::Zero();
  int primitive = -1;
};

/// Nearest hit with t in (1e-9, max_t], or primitive == -1.
Hit cast_ray(const Scene& scene, const Vec3& origin, const Vec3& dir, double max_t);

/// Points are in the sensor frame; `hit_ids` (if given) receives the primitive
/// index per cell, -1 for misses.
StructuredScan simulate_scan(const Scene& scene, const Pose& pose, const SensorParams& sensor,
                             const NoiseParams& noise = {}, std::vector<int>* hit_ids = nullptr);

/// Writes frame_%06d.fscn for every pose plus groundtruth.txt. Frame k is
/// simulated with seed noise.seed + k.
void make_dataset(const Scene& scene, const Trajectory& trajectory, const SensorParams& sensor,
                  const NoiseParams& noise, const std::filesystem::path& out_dir);

/// Sorted frame files of a dataset directory.
std::vector<std::filesystem::path> dataset_frames(const std::filesystem::path& dir);

// Scene builders.
Scene box_room(const Vec3& min, const Vec3& max, double intensity = 0.6);
/// Long corridor along +x with pillars on both walls and closed ends.
Scene corridor(double length = 30.0, double width = 4.0, double height = 3.0, double pillar_spacing = 2.5);
Scene single_plane(const Vec3& normal, double d, double intensity = 0.6);

struct PoleForestInfo {
  std::vector<int> pole_ids;   // bright, distinct poles
  std::vector<int> twig_ids;   // thin clutter with background intensity
  int background_id = -1;      // enclosure
};
/// Poles inside an enclosing cylinder (whose caps form floor and ceiling).
Scene pole_forest(std::uint64_t seed, PoleForestInfo* info = nullptr, int n_poles = 12, int n_twigs = 12,
                  double radius = 12.0);

/// One primitive per line:
///   plane nx ny nz d intensity
///   box minx miny minz maxx maxy maxz intensity
///   cylinder cx cy radius zmin zmax intensity
/// Blank lines and '#' comments are ignored.
Scene parse_scene(const std::string& text);
Scene read_scene(const std::filesystem::path& path);

Trajectory straight_line(std::size_t n, const Vec3& start, const Vec3& step, double dt = 0.1);

}  // namespace featsense::synth
