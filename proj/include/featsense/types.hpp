#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <vector>

namespace featsense {

using Vec3 = Eigen::Vector3d;
using Vec3i = Eigen::Vector3i;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

/// Rigid transform sensor -> world with an attached timestamp.
///
/// Composition `a * b` maps through b first and keeps a's timestamp.
struct Pose {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Vec3 translation = Vec3::Zero();
  double timestamp = 0.0;

  static Pose identity(double t = 0.0) {
    Pose p;
    p.timestamp = t;
    return p;
  }
  static Pose from_rt(const Mat3& r, const Vec3& t, double stamp = 0.0);
  static Pose from_yaw(double yaw_rad, const Vec3& t, double stamp = 0.0);

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Mat3 rotation_matrix() const { return rotation.toRotationMatrix(); }
  Pose inverse() const;
  void normalize() { rotation.normalize(); }
};

Pose operator*(const Pose& a, const Pose& b);

/// Right-multiplied local perturbation: R' = R Exp(omega), t' = t + R v with
/// xi = (omega, v).
Pose retract(const Pose& pose, const Vec6& xi);

Mat3 skew(const Vec3& v);

/// Angle of the relative rotation between two poses, radians.
double rotation_distance(const Pose& a, const Pose& b);

struct Trajectory {
  std::vector<Pose> poses;

  bool empty() const { return poses.empty(); }
  std::size_t size() const { return poses.size(); }
};

}  // namespace featsense
