#include "featsense/synth.hpp"

#include "featsense/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

namespace featsense::synth {

namespace {

constexpr double kEps = 1e-9;

void consider(Hit& best, double t, const Vec3& n, int id, double max_t) {
  if (t > kEps && t <= max_t && (best.primitive < 0 || t < best.t)) best = {t, n, id};
}

void intersect(const Plane& p, const Vec3& o, const Vec3& d, int id, double max_t, Hit& best) {
  const double den = p.normal.dot(d);
  if (std::abs(den) < 1e-15) return;
  consider(best, (p.d - p.normal.dot(o)) / den, p.normal, id, max_t);
}

void intersect(const Box& b, const Vec3& o, const Vec3& d, int id, double max_t, Hit& best) {
  double t_near = -std::numeric_limits<double>::infinity(), t_far = std::numeric_limits<double>::infinity();
  int ax_near = -1, ax_far = -1;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (o[a] < b.min[a] || o[a] > b.max[a]) return;
      continue;
    }
    double t0 = (b.min[a] - o[a]) / d[a], t1 = (b.max[a] - o[a]) / d[a];
    if (t0 > t1) std::swap(t0, t1);
    if (t0 > t_near) t_near = t0, ax_near = a;
    if (t1 < t_far) t_far = t1, ax_far = a;
  }
  if (t_near > t_far) return;
  auto face_normal = [&](int a) {
    Vec3 n = Vec3::Zero();
    n[a] = 1.0;
    return n;
  };
  if (t_near > kEps && ax_near >= 0) {
    consider(best, t_near, face_normal(ax_near), id, max_t);
  } else if (ax_far >= 0) {
    consider(best, t_far, face_normal(ax_far), id, max_t);
  }
}

void intersect(const Cylinder& c, const Vec3& o, const Vec3& d, int id, double max_t, Hit& best) {
  const double ox = o.x() - c.cx, oy = o.y() - c.cy;
  const double a = d.x() * d.x() + d.y() * d.y();
  if (a > 1e-15) {
    const double bh = ox * d.x() + oy * d.y();
    const double cc = ox * ox + oy * oy - c.radius * c.radius;
    const double disc = bh * bh - a * cc;
    if (disc >= 0.0) {
      const double sq = std::sqrt(disc);
      for (double t : {(-bh - sq) / a, (-bh + sq) / a}) {
        const double z = o.z() + t * d.z();
        if (z < c.zmin || z > c.zmax) continue;
        consider(best, t, Vec3(ox + t * d.x(), oy + t * d.y(), 0.0) / c.radius, id, max_t);
      }
    }
  }
  if (std::abs(d.z()) > 1e-15) {
    for (double zc : {c.zmin, c.zmax}) {
      const double t = (zc - o.z()) / d.z();
      const double x = ox + t * d.x(), y = oy + t * d.y();
      if (x * x + y * y <= c.radius * c.radius) consider(best, t, Vec3::UnitZ(), id, max_t);
    }
  }
}

bool proper_intensity(double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; }

}  // namespace

Scene& Scene::add(Plane p, double intensity) {
  p.normal.normalize();
  primitives.push_back({p, intensity});
  return *this;
}
Scene& Scene::add(Box b, double intensity) {
  primitives.push_back({b, intensity});
  return *this;
}
Scene& Scene::add(Cylinder c, double intensity) {
  primitives.push_back({c, intensity});
  return *this;
}

void Scene::check() const {
  for (const Primitive& p : primitives) {
    if (!proper_intensity(p.intensity)) throw Error(Errc::Config, "primitive intensity outside [0,1]");
    const bool finite = std::visit(
        [](const auto& s) {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, Plane>) return s.normal.allFinite() && std::isfinite(s.d) && s.normal.norm() > 0;
          else if constexpr (std::is_same_v<T, Box>) return s.min.allFinite() && s.max.allFinite() && (s.min.array() <= s.max.array()).all();
          else return std::isfinite(s.cx) && std::isfinite(s.cy) && s.radius > 0 && s.zmin <= s.zmax;
        },
        p.shape);
    if (!finite) throw Error(Errc::Config, "malformed primitive");
  }
}

Hit cast_ray(const Scene& scene, const Vec3& origin, const Vec3& dir, double max_t) {
  Hit best;
  for (std::size_t i = 0; i < scene.primitives.size(); ++i)
    std::visit([&](const auto& s) { intersect(s, origin, dir, static_cast<int>(i), max_t, best); },
               scene.primitives[i].shape);
  return best;
}

namespace {

// Through memory: at -O3 the plain double->float->double round trip was
// folded away here.
double to_f32(double v) {
  volatile float f = static_cast<float>(v);
  return static_cast<double>(f);
}

}  // namespace

StructuredScan simulate_scan(const Scene& scene, const Pose& pose, const SensorParams& sensor,
                             const NoiseParams& noise, std::vector<int>* hit_ids) {
  if (sensor.rows < 2) throw Error(Errc::DimensionMismatch, "simulate_scan needs rows >= 2");
  if (!(sensor.vfov_deg > 0.0 && sensor.vfov_deg < 180.0)) throw Error(Errc::DimensionMismatch, "vfov out of range");
  StructuredScan scan = StructuredScan::empty(sensor.rows, sensor.cols, sensor.vfov_deg, pose.timestamp);
  if (hit_ids) hit_ids->assign(scan.size(), -1);
  std::mt19937_64 rng(noise.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Mat3 r = pose.rotation_matrix();
  for (std::uint32_t row = 0; row < sensor.rows; ++row)
    for (std::uint32_t col = 0; col < sensor.cols; ++col) {
      const std::size_t i = scan.index(row, col);
      const Vec3 d_local = cell_direction(row, col, sensor.rows, sensor.cols, sensor.vfov_deg);
      const Vec3 d = r * d_local;
      const Hit hit = cast_ray(scene, pose.translation, d, sensor.max_range);
      // Draws happen for every cell so the noise stream does not depend on
      // which cells hit.
      const double nr = noise.range_sigma > 0.0 ? noise.range_sigma * gauss(rng) : 0.0;
      const double ni = noise.intensity_sigma > 0.0 ? noise.intensity_sigma * gauss(rng) : 0.0;
      if (hit.primitive < 0) continue;
      const double range = hit.t + nr;
      if (!(range > 0.0)) continue;
      const double base = scene.primitives[static_cast<std::size_t>(hit.primitive)].intensity;
      double inten = std::clamp(base * std::abs(hit.normal.dot(d)) + ni, 0.0, 1.0);
      Vec3 p = d_local * range;
      if (sensor.quantize_f32) {
        p = Vec3(to_f32(p.x()), to_f32(p.y()), to_f32(p.z()));
        inten = to_f32(inten);
      }
      scan.points[i] = p;
      scan.intensity[i] = inten;
      scan.valid[i] = 1;
      if (hit_ids) (*hit_ids)[i] = hit.primitive;
    }
  return scan;
}

void make_dataset(const Scene& scene, const Trajectory& trajectory, const SensorParams& sensor,
                  const NoiseParams& noise, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(Errc::Io, "cannot create " + out_dir.string());
  for (std::size_t k = 0; k < trajectory.size(); ++k) {
    NoiseParams nk = noise;
    nk.seed = noise.seed + k;
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%06zu.fscn", k);
    write_scan(simulate_scan(scene, trajectory.poses[k], sensor, nk), out_dir / name);
  }
  write_trajectory(trajectory, out_dir / "groundtruth.txt");
}

std::vector<std::filesystem::path> dataset_frames(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(dir, ec))
    if (entry.is_regular_file() && entry.path().extension() == ".fscn") out.push_back(entry.path());
  if (ec) throw Error(Errc::Io, "cannot list " + dir.string());
  std::sort(out.begin(), out.end());
  return out;
}

Scene box_room(const Vec3& min, const Vec3& max, double intensity) {
  Scene s;
  s.add(Box{min, max}, intensity);
  return s;
}

Scene corridor(double length, double width, double height, double pillar_spacing) {
  Scene s;
  const double hw = width / 2.0;
  s.add(Box{Vec3(-5.0, -hw, -1.5), Vec3(length, hw, height - 1.5)}, 0.5);
  // Pillars protrude 0.3 m from each wall; alternate intensity so the
  // intensity image has vertical edges to follow.
  int k = 0;
  for (double x = -3.0; x < length - 1.0; x += pillar_spacing, ++k) {
    const double off = (k % 2) ? 0.4 : 0.0;
    const double inten = (k % 2) ? 0.9 : 0.2;
    s.add(Box{Vec3(x + off, -hw - 0.1, -1.5), Vec3(x + off + 0.4, -hw + 0.3, height - 1.5)}, inten);
    s.add(Box{Vec3(x + 1.2 - off, hw - 0.3, -1.5), Vec3(x + 1.6 - off, hw + 0.1, height - 1.5)}, 1.0 - inten);
  }
  return s;
}

Scene single_plane(const Vec3& normal, double d, double intensity) {
  Scene s;
  s.add(Plane{normal, d}, intensity);
  return s;
}

Scene pole_forest(std::uint64_t seed, PoleForestInfo* info, int n_poles, int n_twigs, double radius) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ang(-3.14159265358979323846, 3.14159265358979323846);
  std::uniform_real_distribution<double> rad(2.5, radius - 3.0);
  Scene s;
  PoleForestInfo inf;
  const double background = 0.3;
  inf.background_id = 0;
  s.add(Cylinder{0.0, 0.0, radius, -2.0, 4.0}, background);
  std::vector<Vec3> placed;
  auto place = [&](double r_obj) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const double a = ang(rng), rr = rad(rng);
      const Vec3 c(rr * std::cos(a), rr * std::sin(a), r_obj);
      bool ok = true;
      for (const Vec3& q : placed)
        if ((c.head<2>() - q.head<2>()).norm() < c.z() + q.z() + 1.0) ok = false;
      if (ok) {
        placed.push_back(c);
        return c;
      }
    }
    throw Error(Errc::Config, "pole forest too dense");
  };
  for (int i = 0; i < n_poles; ++i) {
    const Vec3 c = place(0.15);
    inf.pole_ids.push_back(static_cast<int>(s.primitives.size()));
    s.add(Cylinder{c.x(), c.y(), 0.15, -2.0, 4.0}, 0.95);
  }
  for (int i = 0; i < n_twigs; ++i) {
    const Vec3 c = place(0.03);
    inf.twig_ids.push_back(static_cast<int>(s.primitives.size()));
    s.add(Cylinder{c.x(), c.y(), 0.03, -2.0, 4.0}, background);
  }
  if (info) *info = inf;
  return s;
}

Scene parse_scene(const std::string& text) {
  Scene s;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string kind;
    if (!(ls >> kind)) continue;
    auto fail = [&] { throw Error(Errc::MalformedLine, "scene line " + std::to_string(lineno)); };
    std::vector<double> v;
    double x;
    while (ls >> x) v.push_back(x);
    if (!ls.eof()) fail();
    if (kind == "plane" && v.size() == 5) {
      s.add(Plane{Vec3(v[0], v[1], v[2]), v[3]}, v[4]);
    } else if (kind == "box" && v.size() == 7) {
      s.add(Box{Vec3(v[0], v[1], v[2]), Vec3(v[3], v[4], v[5])}, v[6]);
    } else if (kind == "cylinder" && v.size() == 6) {
      s.add(Cylinder{v[0], v[1], v[2], v[3], v[4]}, v[5]);
    } else {
      fail();
    }
  }
  s.check();
  return s;
}

Scene read_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scene(ss.str());
}

Trajectory straight_line(std::size_t n, const Vec3& start, const Vec3& step, double dt) {
  Trajectory t;
  for (std::size_t k = 0; k < n; ++k)
    t.poses.push_back(Pose::from_yaw(0.0, start + static_cast<double>(k) * step, static_cast<double>(k) * dt));
  return t;
}

}  // namespace featsense::synth
