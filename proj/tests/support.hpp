#pragma once

#include "featsense/types.hpp"

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>

namespace test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "featsense") {
    std::string templ = (std::filesystem::temp_directory_path() / (tag + "-XXXXXX")).string();
    if (!mkdtemp(templ.data())) throw std::runtime_error("mkdtemp failed");
    path_ = templ;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline featsense::Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  featsense::Vec3 v;
  do v = featsense::Vec3(g(rng), g(rng), g(rng));
  while (v.norm() < 1e-6);
  return v.normalized();
}

inline featsense::Pose random_pose(std::mt19937_64& rng, double max_angle, double max_trans) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Eigen::AngleAxisd aa(max_angle * std::abs(u(rng)), random_unit(rng));
  featsense::Pose p;
  p.rotation = Eigen::Quaterniond(aa);
  p.translation = featsense::Vec3(u(rng), u(rng), u(rng)) * max_trans;
  return p;
}

}  // namespace test
