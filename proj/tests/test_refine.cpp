#include "featsense/error.hpp"
#include "featsense/refine.hpp"
#include "featsense/scan_io.hpp"
#include "featsense/synth.hpp"
#include "oracles/room.hpp"
#include "support.hpp"

#include <doctest.h>
#include <Eigen/Eigenvalues>

#include <chrono>
#include <cmath>
#include <map>
#include <numbers>
#include <thread>

using namespace featsense;
using namespace featsense::refine;

namespace {

// Corner room moved so its planes run through voxel centers rather than
// along voxel faces (a plane on a face loses every residual once it moves
// into the empty neighbor).
std::vector<Vec3> room_points(double spacing, double offset = 0.0) {
  std::vector<Vec3> pts = oracle::corner_room(spacing, 1.0, offset, 4.0, 0.05).surfaces;
  for (auto& p : pts) p += Vec3(0.25, 0.25, 0.25);
  return pts;
}

std::vector<Vec3> transformed(const std::vector<Vec3>& pts, const Pose& t) {
  std::vector<Vec3> out;
  for (const auto& p : pts) out.push_back(t.apply(p));
  return out;
}

// Scans of a closed room along +x, sensor-frame points.
std::vector<std::vector<Vec3>> room_scans(const Trajectory& truth) {
  const synth::Scene scene = synth::box_room(Vec3(-6.27, -3.81, -1.33), Vec3(12.23, 4.19, 2.71));
  synth::SensorParams sensor;
  sensor.cols = 512;
  std::vector<std::vector<Vec3>> out;
  for (const auto& pose : truth.poses) out.push_back(valid_points(synth::simulate_scan(scene, pose, sensor)));
  return out;
}

}  // namespace

TEST_CASE("voxel distributions") {
  SUBCASE("points of a plane give a normal-aligned smallest eigenvector") {
    std::vector<Vec3> pts;
    for (double x = 0.01; x < 0.5; x += 0.05)
      for (double y = 0.01; y < 0.5; y += 0.05) pts.push_back(Vec3(x, y, 0.2));
    const auto map = build_voxel_distributions(pts, 0.5, 10);
    REQUIRE(map.size() == 1);
    const auto cells = map.cells();
    CHECK(cells[0].second.count == pts.size());
    Eigen::SelfAdjointEigenSolver<Mat3> es(cells[0].second.cov);
    CHECK(std::abs(std::abs(es.eigenvectors().col(0).z()) - 1.0) < 1e-9);
    CHECK(es.eigenvalues()(0) == doctest::Approx(1e-3));
  }
  SUBCASE("two clusters fill two voxels") {
    std::vector<Vec3> pts;
    for (int i = 0; i < 12; ++i) {
      pts.push_back(Vec3(0.1 + 0.01 * i, 0.1, 0.1 + 0.001 * i * i));
      pts.push_back(Vec3(5.1 + 0.01 * i, 0.1, 0.1 + 0.001 * i * i));
    }
    const auto map = build_voxel_distributions(pts, 0.5, 10);
    CHECK(map.size() == 2);
    for (const auto& [k, d] : map.cells()) CHECK(d.count == 12);
  }
  SUBCASE("fewer points than knn") {
    const std::vector<Vec3> pts(3, Vec3::Zero());
    CHECK_THROWS_AS(build_voxel_distributions(pts, 0.5, 10), Error);
  }
  SUBCASE("aggregation matches a brute-force mean") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    std::vector<Vec3> pts;
    for (int i = 0; i < 500; ++i) pts.push_back(Vec3(u(rng), u(rng), u(rng)));
    const auto covs = estimate_covariances(pts, 10);
    VoxelDistributionMap map(0.7);
    map.add(pts, covs);
    std::map<VoxelKey, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const VoxelKey k{static_cast<std::int64_t>(std::floor(pts[i].x() / 0.7)),
                       static_cast<std::int64_t>(std::floor(pts[i].y() / 0.7)),
                       static_cast<std::int64_t>(std::floor(pts[i].z() / 0.7))};
      members[k].push_back(i);
    }
    const auto cells = map.cells();
    REQUIRE(cells.size() == members.size());
    for (const auto& [k, d] : cells) {
      const auto& m = members.at(k);
      Vec3 mean = Vec3::Zero();
      Mat3 cov = Mat3::Zero();
      for (std::size_t i : m) {
        mean += pts[i];
        cov += covs[i];
      }
      mean /= double(m.size());
      cov /= double(m.size());
      CHECK(d.count == m.size());
      CHECK((d.mean - mean).norm() < 1e-12);
      CHECK((d.cov - cov).norm() < 1e-12);
    }
  }
}

TEST_CASE("vgicp registration") {
  const auto target_pts = room_points(0.05);
  const auto target = build_voxel_distributions(target_pts, 0.5, 10);
  const auto src_world = room_points(0.1, 0.023);

  SUBCASE("the generating cloud is a fixed point") {
    const auto cov = estimate_covariances(target_pts, 10);
    const Pose out = vgicp_register(target_pts, cov, target, Pose::identity());
    CHECK(out.translation.norm() < 1e-4);
    CHECK(rotation_distance(out, Pose::identity()) < 1e-4);
  }
  SUBCASE("recovers a translation") {
    const Pose truth = Pose::from_yaw(0.0, Vec3(0.1, 0.05, 0.0));
    const auto src = transformed(src_world, truth.inverse());
    const auto cov = estimate_covariances(src, 10);
    const Pose out = vgicp_register(src, cov, target, Pose::identity());
    CHECK((out.translation - truth.translation).norm() < 1e-2);
    CHECK(rotation_distance(out, truth) < 1e-2);
  }
  SUBCASE("disjoint clouds are degenerate") {
    const auto src = transformed(src_world, Pose::from_yaw(0.0, Vec3(1000, 0, 0)));
    const auto cov = estimate_covariances(src, 10);
    try {
      vgicp_register(src, cov, target, Pose::identity());
      FAIL("expected Degenerate");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::Degenerate);
    }
  }
}

TEST_CASE("vgicp objective is invariant under grid-preserving transforms") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  std::vector<Vec3> tgt, src;
  for (int i = 0; i < 400; ++i) tgt.push_back(Vec3(u(rng), u(rng), 0.3 * std::sin(u(rng))));
  for (int i = 0; i < 200; ++i) src.push_back(Vec3(u(rng), u(rng), 0.3 * std::sin(u(rng))));
  const auto tgt_cov = estimate_covariances(tgt, 10);
  const auto src_cov = estimate_covariances(src, 10);
  VoxelDistributionMap base(0.5);
  base.add(tgt, tgt_cov);
  const Pose pose = Pose::from_yaw(0.05, Vec3(0.03, -0.02, 0.01));
  std::size_t active = 0;
  const double f0 = vgicp_objective(src, src_cov, base, pose, &active);
  REQUIRE(active > 100);

  const Pose transforms[] = {Pose::from_yaw(0.0, Vec3(1.5, -2.0, 0.5)),
                             Pose::from_yaw(std::numbers::pi / 2, Vec3::Zero()),
                             Pose::from_yaw(-std::numbers::pi / 2, Vec3(2.5, 0.5, -1.0))};
  for (const Pose& a : transforms) {
    const Mat3 r = a.rotation_matrix();
    std::vector<Mat3> moved_cov;
    for (const auto& c : tgt_cov) moved_cov.push_back(r * c * r.transpose());
    VoxelDistributionMap moved(0.5);
    moved.add(transformed(tgt, a), moved_cov);
    std::size_t moved_active = 0;
    const double f1 = vgicp_objective(src, src_cov, moved, a * pose, &moved_active);
    CHECK(moved_active == active);
    CHECK(std::abs(f1 - f0) <= 1e-9 * std::max(1.0, std::abs(f0)));
  }
}

TEST_CASE("refine state trigger") {
  RefineParams p;
  RefineState state(p);
  const std::vector<Vec3> pts{Vec3(1, 0, 0)};
  for (int i = 0; i <= 3; ++i) state.push(pts, Pose::from_yaw(0.0, Vec3(i, 0, 0), 0.1 * i));
  CHECK(state.distance_since_last() == doctest::Approx(3.0));
  CHECK_FALSE(state.triggered());
  CHECK_FALSE(maybe_refine(state, Pose::identity()));
  CHECK(state.pending().size() == 4);
  state.push(pts, Pose::from_yaw(0.0, Vec3(5, 0, 0), 0.4));
  CHECK(state.triggered());
  const RefineJob job = state.take_job(Pose::identity());
  CHECK(job.scans.size() == 5);
  CHECK((job.scans.back().incremental.translation - Vec3(5, 0, 0)).norm() < 1e-12);
  CHECK(state.pending().size() == 1);
  CHECK(state.distance_since_last() == 0.0);
}

TEST_CASE("refinement of a drift-free window is the identity") {
  const Trajectory truth = synth::straight_line(12, Vec3::Zero(), Vec3(0.5, 0.0, 0.0));
  const auto scans = room_scans(truth);
  RefineState state;
  for (std::size_t k = 0; k < scans.size(); ++k) state.push(scans[k], truth.poses[k]);
  REQUIRE(state.triggered());
  const auto corr = maybe_refine(state, truth.poses.back());
  REQUIRE(corr);
  CHECK(corr->translation.norm() < 1e-3);
  CHECK(rotation_distance(*corr, Pose::identity()) < 1e-3);
}

TEST_CASE("refinement reduces accumulated lateral drift") {
  const Trajectory truth = synth::straight_line(12, Vec3::Zero(), Vec3(0.5, 0.0, 0.0));
  const auto scans = room_scans(truth);
  RefineState state;
  Pose odom;
  for (std::size_t k = 0; k < scans.size(); ++k) {
    odom = truth.poses[k];
    odom.translation.y() += 0.05 * static_cast<double>(k);
    state.push(scans[k], odom);
  }
  const auto corr = maybe_refine(state, odom);
  REQUIRE(corr);
  const Pose refined = *corr * odom;
  const double before = (odom.translation - truth.poses.back().translation).norm();
  const double after = (refined.translation - truth.poses.back().translation).norm();
  CHECK(before == doctest::Approx(0.55));
  CHECK(after < 0.5 * before);
}

TEST_CASE("realtime refinement in progress blocks a new one") {
  RefineParams p;
  p.realtime = true;
  p.trigger_distance = 1.0;
  RefineState state(p);
  const std::vector<Vec3> pts{Vec3(1, 0, 0)};
  state.push(pts, Pose::identity());
  state.push(pts, Pose::from_yaw(0.0, Vec3(2, 0, 0), 0.1));
  state.set_in_progress(true);
  CHECK_FALSE(maybe_refine(state, Pose::identity()));
  CHECK(state.pending().size() == 2);
  AsyncRefiner async;
  CHECK_FALSE(async.try_start(state, Pose::identity()));
  state.set_in_progress(false);
}

TEST_CASE("asynchronous refinement") {
  const Trajectory truth = synth::straight_line(12, Vec3::Zero(), Vec3(0.5, 0.0, 0.0));
  const auto scans = room_scans(truth);
  RefineParams p;
  p.realtime = true;
  RefineState state(p);
  for (std::size_t k = 0; k < scans.size(); ++k) state.push(scans[k], truth.poses[k]);
  AsyncRefiner async;
  REQUIRE(async.try_start(state, truth.poses.back()));
  CHECK(state.in_progress());
  CHECK_FALSE(async.try_start(state, truth.poses.back()));
  const auto corr = async.wait();
  CHECK_FALSE(state.in_progress());
  CHECK_FALSE(async.busy());
  REQUIRE(corr);
  CHECK(corr->translation.norm() < 1e-3);
  CHECK_FALSE(async.poll());
}
