#pragma once

#include "featsense/features.hpp"
#include "featsense/image.hpp"
#include "featsense/odometry.hpp"
#include "featsense/refine.hpp"
#include "featsense/tsdf.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace featsense {

struct PipelineConfig {
  std::filesystem::path dataset;
  std::filesystem::path trajectory_out = "trajectory.txt";
  std::filesystem::path map_out = "map.fsdf";
  std::filesystem::path stats_out;  // empty: stdout only

  std::size_t workers = 1;
  bool realtime = false;
  double realtime_budget_ms = 100.0;

  image::ImagePipelineParams image;
  features::FeatureParams features;
  odometry::OdometryParams odometry;

  bool refine_enabled = true;
  refine::RefineParams refine;

  bool tsdf_enabled = true;
  tsdf::TsdfParams tsdf;
  Vec3 map_size = Vec3(20.0, 20.0, 15.0);  // meters, rounded up to whole chunks

  double eval_max_dt = 0.02;

  /// Debug aid: translation added to every odometry estimate, sensor-to-world
  /// frame, to emulate a biased front end.
  Vec3 odom_bias = Vec3::Zero();

  /// Throws Error(Config) on out-of-range values.
  void validate() const;
};

/// Flat `key = value` text, one per line, '#' comments. Unknown keys and
/// unparsable values raise Error(Config). Relative paths are resolved against
/// `base_dir`.
PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);

/// Every accepted key, in documentation order.
std::vector<std::string> config_keys();

}  // namespace featsense
