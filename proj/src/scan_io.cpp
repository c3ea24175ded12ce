#include "featsense/scan_io.hpp"

#include "featsense/error.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

namespace featsense {

namespace {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

constexpr std::array<char, 4> kScanMagic{'F', 'S', 'C', 'N'};
constexpr std::size_t kScanHeaderBytes = 4 + 4 + 4 + 4 + 8 + 4;
constexpr std::size_t kScanRecordBytes = 16;

template <class T>
void put(std::vector<char>& buf, T v) {
  const auto* p = reinterpret_cast<const char*>(&v);
  buf.insert(buf.end(), p, p + sizeof(T));
}

template <class T>
T get(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

bool finite3(const Vec3& p) { return std::isfinite(p.x()) && std::isfinite(p.y()) && std::isfinite(p.z()); }

}  // namespace

StructuredScan StructuredScan::empty(std::uint32_t rows, std::uint32_t cols, double vfov_deg,
                                     double timestamp) {
  StructuredScan s;
  s.rows = rows;
  s.cols = cols;
  s.vfov_deg = vfov_deg;
  s.timestamp = timestamp;
  const std::size_t n = static_cast<std::size_t>(rows) * cols;
  s.points.assign(n, Vec3::Zero());
  s.intensity.assign(n, 0.0);
  s.valid.assign(n, 0);
  return s;
}

std::size_t StructuredScan::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

void StructuredScan::check() const {
  const std::size_t n = static_cast<std::size_t>(rows) * cols;
  if (points.size() != n || intensity.size() != n || valid.size() != n)
    throw Error(Errc::DimensionMismatch, "grid arrays do not match rows x cols");
  if (rows < 2) throw Error(Errc::DimensionMismatch, "structured scans need at least two rows");
  for (std::size_t i = 0; i < n; ++i) {
    if (valid[i] && (!finite3(points[i]) || points[i].norm() <= 0.0))
      throw Error(Errc::DimensionMismatch, "valid cell with non-finite or zero range");
  }
}

double row_elevation_rad(std::uint32_t row, std::uint32_t rows, double vfov_deg) {
  const double vfov = vfov_deg * std::numbers::pi / 180.0;
  return vfov / 2.0 - (row + 0.5) * vfov / rows;
}

double col_azimuth_rad(std::uint32_t col, std::uint32_t cols) {
  return -std::numbers::pi + col * (2.0 * std::numbers::pi / cols);
}

Vec3 cell_direction(std::uint32_t row, std::uint32_t col, std::uint32_t rows, std::uint32_t cols,
                    double vfov_deg) {
  const double e = row_elevation_rad(row, rows, vfov_deg);
  const double a = col_azimuth_rad(col, cols);
  return {std::cos(e) * std::cos(a), std::cos(e) * std::sin(a), std::sin(e)};
}

StructuredScan read_scan(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < kScanHeaderBytes || !std::equal(kScanMagic.begin(), kScanMagic.end(), data.begin()))
    throw Error(Errc::MalformedFile, path.string() + ": bad magic or truncated header");

  const char* p = data.data() + 4;
  const auto rows = get<std::uint32_t>(p);
  const auto cols = get<std::uint32_t>(p + 4);
  const auto vfov = get<float>(p + 8);
  const auto stamp = get<double>(p + 12);
  const auto max_intensity = get<float>(p + 20);

  const std::size_t n = static_cast<std::size_t>(rows) * cols;
  if (data.size() != kScanHeaderBytes + n * kScanRecordBytes)
    throw Error(Errc::DimensionMismatch, path.string() + ": payload length does not match header");
  if (rows < 2) throw Error(Errc::MalformedFile, path.string() + ": fewer than two rows");
  if (!(max_intensity > 0.0f)) throw Error(Errc::MalformedFile, path.string() + ": max_intensity <= 0");

  StructuredScan scan = StructuredScan::empty(rows, cols, vfov, stamp);
  scan.max_intensity = max_intensity;
  const char* rec = data.data() + kScanHeaderBytes;
  for (std::size_t i = 0; i < n; ++i, rec += kScanRecordBytes) {
    const Vec3 pt(get<float>(rec), get<float>(rec + 4), get<float>(rec + 8));
    const double raw_i = get<float>(rec + 12);
    const bool ok = finite3(pt) && pt.squaredNorm() > 0.0;
    scan.valid[i] = ok ? 1 : 0;
    scan.points[i] = ok ? pt : Vec3::Zero();
    const double norm_i = std::isfinite(raw_i) ? raw_i / max_intensity : 0.0;
    scan.intensity[i] = std::clamp(norm_i, 0.0, 1.0);
  }
  return scan;
}

void write_scan(const StructuredScan& scan, const std::filesystem::path& path) {
  scan.check();
  std::vector<char> buf;
  buf.reserve(kScanHeaderBytes + scan.size() * kScanRecordBytes);
  buf.insert(buf.end(), kScanMagic.begin(), kScanMagic.end());
  put<std::uint32_t>(buf, scan.rows);
  put<std::uint32_t>(buf, scan.cols);
  put<float>(buf, static_cast<float>(scan.vfov_deg));
  put<double>(buf, scan.timestamp);
  put<float>(buf, static_cast<float>(scan.max_intensity));
  for (std::size_t i = 0; i < scan.size(); ++i) {
    const Vec3 p = scan.valid[i] ? scan.points[i] : Vec3::Zero();
    put<float>(buf, static_cast<float>(p.x()));
    put<float>(buf, static_cast<float>(p.y()));
    put<float>(buf, static_cast<float>(p.z()));
    put<float>(buf, static_cast<float>(scan.intensity[i] * scan.max_intensity));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error(Errc::Io, "short write to " + path.string());
}

StructuredScan order_by_vertical_angle(std::span<const RawPoint> cloud, std::uint32_t rows,
                                       std::uint32_t cols, double vfov_deg, double timestamp) {
  if (cloud.empty()) throw Error(Errc::EmptyCloud, "order_by_vertical_angle on an empty cloud");
  if (rows < 2) throw Error(Errc::DimensionMismatch, "rows must be >= 2");
  StructuredScan scan = StructuredScan::empty(rows, cols, vfov_deg, timestamp);
  const double vfov = vfov_deg * std::numbers::pi / 180.0;
  const double row_step = vfov / rows;
  const double col_step = 2.0 * std::numbers::pi / cols;
  std::vector<double> best(scan.size(), std::numeric_limits<double>::infinity());
  for (const RawPoint& rp : cloud) {
    const double r = rp.position.norm();
    if (!finite3(rp.position) || !(r > 0.0)) continue;
    const double elev = std::asin(std::clamp(rp.position.z() / r, -1.0, 1.0));
    const double az = std::atan2(rp.position.y(), rp.position.x());
    const auto row = static_cast<std::int64_t>(std::floor((vfov / 2.0 - elev) / row_step));
    auto col = static_cast<std::int64_t>(std::llround((az + std::numbers::pi) / col_step));
    col = ((col % cols) + cols) % cols;
    const auto rr = static_cast<std::uint32_t>(std::clamp<std::int64_t>(row, 0, rows - 1));
    const std::size_t idx = scan.index(rr, static_cast<std::uint32_t>(col));
    if (r < best[idx]) {
      best[idx] = r;
      scan.points[idx] = rp.position;
      scan.intensity[idx] = std::clamp(rp.intensity, 0.0, 1.0);
      scan.valid[idx] = 1;
    }
  }
  return scan;
}

std::vector<RawPoint> flatten(const StructuredScan& scan) {
  std::vector<RawPoint> out;
  out.reserve(scan.valid_count());
  for (std::size_t i = 0; i < scan.size(); ++i)
    if (scan.valid[i]) out.push_back({scan.points[i], scan.intensity[i]});
  return out;
}

std::vector<Vec3> valid_points(const StructuredScan& scan) {
  std::vector<Vec3> out;
  out.reserve(scan.valid_count());
  for (std::size_t i = 0; i < scan.size(); ++i)
    if (scan.valid[i]) out.push_back(scan.points[i]);
  return out;
}

void check_trajectory(const Trajectory& traj) {
  for (std::size_t i = 1; i < traj.poses.size(); ++i)
    if (!(traj.poses[i].timestamp > traj.poses[i - 1].timestamp))
      throw Error(Errc::NonMonotonicTimestamps,
                  "timestamps not strictly increasing at pose " + std::to_string(i));
}

Trajectory read_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  Trajectory traj;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    std::array<double, 8> v{};
    for (double& x : v)
      if (!(ls >> x)) throw Error(Errc::MalformedLine, path.string() + ":" + std::to_string(lineno));
    std::string extra;
    if (ls >> extra) throw Error(Errc::MalformedLine, path.string() + ":" + std::to_string(lineno));
    Pose p;
    p.timestamp = v[0];
    p.translation = Vec3(v[1], v[2], v[3]);
    p.rotation = Eigen::Quaterniond(v[7], v[4], v[5], v[6]);
    const double qn = p.rotation.norm();
    if (!(qn > 0.0) || !std::isfinite(qn))
      throw Error(Errc::MalformedLine, path.string() + ":" + std::to_string(lineno) + " zero quaternion");
    p.normalize();
    traj.poses.push_back(p);
  }
  check_trajectory(traj);
  return traj;
}

void write_trajectory(const Trajectory& traj, const std::filesystem::path& path) {
  check_trajectory(traj);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  char buf[512];
  for (const Pose& p : traj.poses) {
    const auto& q = p.rotation;
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n", p.timestamp,
                  p.translation.x(), p.translation.y(), p.translation.z(), q.x(), q.y(), q.z(), q.w());
    out << buf;
  }
  if (!out) throw Error(Errc::Io, "short write to " + path.string());
}

}  // namespace featsense
