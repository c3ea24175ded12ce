#include "featsense/error.hpp"
#include "featsense/scan_io.hpp"
#include "featsense/synth.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace featsense;
using namespace featsense::synth;

TEST_CASE("empty scene gives an all-invalid scan") {
  const StructuredScan s = simulate_scan(Scene{}, Pose::identity(), SensorParams{});
  CHECK(s.rows == 16);
  CHECK(s.cols == 1024);
  CHECK(s.valid_count() == 0);
  s.check();
}

TEST_CASE("plane x = 5 ranges") {
  SensorParams sensor;
  sensor.quantize_f32 = false;
  const StructuredScan s = simulate_scan(single_plane(Vec3::UnitX(), 5.0), Pose::identity(), sensor);
  std::size_t checked = 0;
  for (std::uint32_t r = 0; r < s.rows; ++r)
    for (std::uint32_t c = 0; c < s.cols; ++c) {
      const double az = col_azimuth_rad(c, s.cols);
      const double el = row_elevation_rad(r, s.rows, sensor.vfov_deg);
      if (std::cos(az) <= 0.05) {
        CHECK_FALSE(s.is_valid(r, c));
        continue;
      }
      REQUIRE(s.is_valid(r, c));
      CHECK(std::abs(s.range(r, c) - 5.0 / (std::cos(el) * std::cos(az))) < 1e-9);
      CHECK(std::abs(s.point(r, c).x() - 5.0) < 1e-9);
      ++checked;
    }
  CHECK(checked > 0);
  // Center column, middle rows: azimuth 0.
  CHECK(std::abs(s.range(7, 512) - 5.0 / std::cos(row_elevation_rad(7, 16, 30.0))) < 1e-12);
}

TEST_CASE("zero-noise simulation is rigidly equivariant") {
  std::mt19937_64 rng(13);
  SensorParams sensor;
  sensor.cols = 256;
  sensor.quantize_f32 = false;
  std::vector<std::pair<Vec3, double>> planes{{Vec3(1, 0, 0), 6.0}, {Vec3(-1, 0.2, 0).normalized(), 5.0},
                                              {Vec3(0, 1, 0), 4.0}, {Vec3(0, -1, 0.1).normalized(), 3.0},
                                              {Vec3(0, 0, 1), 2.0}, {Vec3(0, 0, -1), 1.5}};
  for (int trial = 0; trial < 5; ++trial) {
    const Pose t = test::random_pose(rng, std::numbers::pi, 10.0);
    Scene a, b;
    for (const auto& [n, d] : planes) {
      a.add(Plane{n, d}, 0.5);
      const Vec3 n2 = t.rotation * n;
      b.add(Plane{n2, d + n2.dot(t.translation)}, 0.5);
    }
    const Pose p1 = Pose::from_yaw(0.2, Vec3(0.3, -0.1, 0.2));
    const StructuredScan s1 = simulate_scan(a, p1, sensor);
    const StructuredScan s2 = simulate_scan(b, t * p1, sensor);
    REQUIRE(s1.valid == s2.valid);
    for (std::size_t i = 0; i < s1.size(); ++i) {
      if (!s1.valid[i]) continue;
      CHECK((s1.points[i] - s2.points[i]).norm() < 1e-9);
      CHECK(std::abs(s1.intensity[i] - s2.intensity[i]) < 1e-9);
    }
  }
}

TEST_CASE("box room seen from inside") {
  const Scene room = box_room(Vec3(-3, -2, -1), Vec3(4, 2, 2));
  std::vector<int> ids;
  const StructuredScan s = simulate_scan(room, Pose::identity(), SensorParams{}, {}, &ids);
  CHECK(s.valid_count() == s.size());
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(ids[i] == 0);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const Vec3& p = s.points[i];
    const double out = std::min({std::abs(p.x() + 3), std::abs(p.x() - 4), std::abs(p.y() + 2), std::abs(p.y() - 2),
                                 std::abs(p.z() + 1), std::abs(p.z() - 2)});
    CHECK(out < 1e-5);
  }
}

TEST_CASE("cast_ray") {
  Scene scene;
  scene.add(Cylinder{2.0, 0.0, 0.5, -1.0, 1.0}, 0.9);
  const Hit h = cast_ray(scene, Vec3::Zero(), Vec3::UnitX(), 100.0);
  CHECK(h.primitive == 0);
  CHECK(h.t == doctest::Approx(1.5));
  CHECK((h.normal - Vec3(-1, 0, 0)).norm() < 1e-12);
  CHECK(cast_ray(scene, Vec3::Zero(), Vec3::UnitY(), 100.0).primitive == -1);
  CHECK(cast_ray(scene, Vec3::Zero(), Vec3::UnitX(), 1.0).primitive == -1);
}

TEST_CASE("datasets") {
  test::TempDir dir;
  const Scene room = box_room(Vec3(-4, -3, -1.5), Vec3(5, 3, 2));
  SensorParams sensor;
  sensor.cols = 256;
  SUBCASE("one pose gives one frame") {
    make_dataset(room, straight_line(1, Vec3::Zero(), Vec3::Zero()), sensor, {}, dir.path());
    CHECK(dataset_frames(dir.path()).size() == 1);
    CHECK(read_trajectory(dir / "groundtruth.txt").size() == 1);
  }
  SUBCASE("zero-noise frames reread bit-exact") {
    const Trajectory traj = straight_line(3, Vec3::Zero(), Vec3(0.1, 0.02, 0.0));
    make_dataset(room, traj, sensor, {}, dir.path());
    const auto frames = dataset_frames(dir.path());
    REQUIRE(frames.size() == 3);
    for (std::size_t k = 0; k < 3; ++k) {
      StructuredScan mem = simulate_scan(room, traj.poses[k], sensor);
      mem.timestamp = traj.poses[k].timestamp;
      const StructuredScan disk = read_scan(frames[k]);
      CHECK(disk.rows == mem.rows);
      CHECK(disk.cols == mem.cols);
      CHECK(disk.valid == mem.valid);
      std::size_t diffs = 0;
      for (std::size_t i = 0; i < mem.size(); ++i) diffs += disk.points[i] != mem.points[i];
      CHECK(diffs == 0);
      CHECK(disk.intensity == mem.intensity);
      CHECK(disk.timestamp == mem.timestamp);
    }
    const Trajectory gt = read_trajectory(dir / "groundtruth.txt");
    REQUIRE(gt.size() == 3);
    CHECK((gt.poses[2].translation - traj.poses[2].translation).norm() < 1e-9);
  }
  SUBCASE("seeded noise is reproducible") {
    NoiseParams noise;
    noise.range_sigma = 0.01;
    noise.intensity_sigma = 0.05;
    noise.seed = 77;
    const StructuredScan a = simulate_scan(room, Pose::identity(), sensor, noise);
    const StructuredScan b = simulate_scan(room, Pose::identity(), sensor, noise);
    CHECK(a.points == b.points);
    CHECK(a.intensity == b.intensity);
    noise.seed = 78;
    const StructuredScan c = simulate_scan(room, Pose::identity(), sensor, noise);
    CHECK(a.points != c.points);
  }
}

TEST_CASE("scene files") {
  const Scene s = parse_scene(
      "# a room\n"
      "plane 0 0 1 -1.5 0.4\n"
      "\n"
      "box -1 -1 -1 1 1 1 0.7\n"
      "cylinder 2 3 0.2 -1 2 0.9\n");
  REQUIRE(s.primitives.size() == 3);
  CHECK(std::holds_alternative<Plane>(s.primitives[0].shape));
  CHECK(std::get<Plane>(s.primitives[0].shape).d == -1.5);
  CHECK(std::get<Box>(s.primitives[1].shape).max == Vec3(1, 1, 1));
  CHECK(std::get<Cylinder>(s.primitives[2].shape).radius == 0.2);
  CHECK(s.primitives[2].intensity == 0.9);
  CHECK_THROWS_AS(parse_scene("sphere 0 0 0 1 0.5\n"), Error);
  CHECK_THROWS_AS(parse_scene("plane 0 0 1\n"), Error);
  CHECK_THROWS_AS(parse_scene("plane 0 0 1 0 1.5\n"), Error);  // intensity outside [0, 1]
}

TEST_CASE("pole forest bookkeeping") {
  PoleForestInfo info;
  const Scene s = pole_forest(5, &info);
  CHECK(info.pole_ids.size() == 12);
  CHECK(info.twig_ids.size() == 12);
  CHECK(info.background_id == 0);
  CHECK(s.primitives.size() == 25);
  const Scene again = pole_forest(5);
  for (std::size_t i = 0; i < s.primitives.size(); ++i) {
    const auto* a = std::get_if<Cylinder>(&s.primitives[i].shape);
    const auto* b = std::get_if<Cylinder>(&again.primitives[i].shape);
    REQUIRE(a);
    REQUIRE(b);
    CHECK(a->cx == b->cx);
    CHECK(a->cy == b->cy);
  }
}
