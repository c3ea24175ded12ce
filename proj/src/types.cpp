#include "featsense/types.hpp"

#include "featsense/error.hpp"

namespace featsense {

const char* errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::MalformedFile: return "MalformedFile";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::EmptyCloud: return "EmptyCloud";
    case Errc::MalformedLine: return "MalformedLine";
    case Errc::NonMonotonicTimestamps: return "NonMonotonicTimestamps";
    case Errc::BadKernel: return "BadKernel";
    case Errc::MapEmpty: return "MapEmpty";
    case Errc::Degenerate: return "Degenerate";
    case Errc::TooFewPoints: return "TooFewPoints";
    case Errc::DegenerateDirection: return "DegenerateDirection";
    case Errc::GeometryMismatch: return "GeometryMismatch";
    case Errc::StoreIo: return "StoreIo";
    case Errc::NoOverlap: return "NoOverlap";
    case Errc::DegenerateGeometry: return "DegenerateGeometry";
    case Errc::Io: return "Io";
    case Errc::Config: return "Config";
  }
  return "Unknown";
}

Pose Pose::from_rt(const Mat3& r, const Vec3& t, double stamp) {
  Pose p;
  p.rotation = Eigen::Quaterniond(r).normalized();
  p.translation = t;
  p.timestamp = stamp;
  return p;
}

Pose Pose::from_yaw(double yaw_rad, const Vec3& t, double stamp) {
  Pose p;
  p.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(yaw_rad, Vec3::UnitZ()));
  p.translation = t;
  p.timestamp = stamp;
  return p;
}

Pose Pose::inverse() const {
  Pose p;
  p.rotation = rotation.conjugate();
  p.translation = -(p.rotation * translation);
  p.timestamp = timestamp;
  return p;
}

Pose operator*(const Pose& a, const Pose& b) {
  Pose p;
  p.rotation = a.rotation * b.rotation;
  p.translation = a.rotation * b.translation + a.translation;
  p.timestamp = a.timestamp;
  return p;
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Pose retract(const Pose& pose, const Vec6& xi) {
  const Vec3 omega = xi.head<3>();
  const Vec3 v = xi.tail<3>();
  const double angle = omega.norm();
  Eigen::Quaterniond dq = Eigen::Quaterniond::Identity();
  if (angle > 0.0) dq = Eigen::Quaterniond(Eigen::AngleAxisd(angle, omega / angle));
  Pose out;
  out.rotation = (pose.rotation * dq).normalized();
  out.translation = pose.translation + pose.rotation * v;
  out.timestamp = pose.timestamp;
  return out;
}

double rotation_distance(const Pose& a, const Pose& b) {
  return a.rotation.angularDistance(b.rotation);
}

}  // namespace featsense
