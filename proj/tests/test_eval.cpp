#include "featsense/error.hpp"
#include "featsense/eval.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace featsense;
using namespace featsense::eval;

namespace {

Trajectory helix(std::size_t n, double t0 = 0.0) {
  Trajectory t;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = 0.1 * static_cast<double>(i);
    t.poses.push_back(Pose::from_yaw(s, Vec3(3.0 * std::cos(s), 2.0 * std::sin(s), 0.2 * s), t0 + s));
  }
  return t;
}

}  // namespace

TEST_CASE("associate") {
  const Trajectory gt = helix(30);
  SUBCASE("identical stamps pair fully") {
    const auto pairs = associate(gt, gt);
    REQUIRE(pairs.size() == gt.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) CHECK(pairs[i].first.timestamp == pairs[i].second.timestamp);
  }
  SUBCASE("1 s offset does not overlap") {
    Trajectory est = gt;
    for (auto& p : est.poses) p.timestamp += 1.0;
    // Shifted by a whole multiple of 0.1 s, stamps would coincide with other
    // ground-truth poses; keep them clear.
    for (auto& p : est.poses) p.timestamp += 0.05;
    try {
      associate(est, gt, 0.02);
      FAIL("expected NoOverlap");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::NoOverlap);
    }
  }
  SUBCASE("5 ms jitter pairs index-wise") {
    Trajectory est = gt;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> j(-0.005, 0.005);
    for (auto& p : est.poses) p.timestamp += j(rng);
    const auto pairs = associate(est, gt, 0.02);
    REQUIRE(pairs.size() == gt.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      CHECK(pairs[i].first.timestamp == est.poses[i].timestamp);
      CHECK(pairs[i].second.timestamp == gt.poses[i].timestamp);
    }
  }
  SUBCASE("each ground-truth pose is used once") {
    Trajectory est;
    est.poses = {Pose::identity(0.099), Pose::identity(0.101)};
    Trajectory g;
    g.poses = {Pose::identity(0.1)};
    const auto pairs = associate(est, g);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].first.timestamp == 0.099);  // tie broken by order
  }
}

TEST_CASE("align_umeyama") {
  const Trajectory gt = helix(40);
  SUBCASE("aligned pairs give identity") {
    const Pose t = align_umeyama(associate(gt, gt));
    CHECK(t.translation.norm() < 1e-9);
    CHECK(rotation_distance(t, Pose::identity()) < 1e-9);
  }
  SUBCASE("known transform is inverted") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 10; ++trial) {
      const Pose known = test::random_pose(rng, std::numbers::pi, 10.0);
      Trajectory est = gt;
      for (auto& p : est.poses) {
        const double stamp = p.timestamp;
        p = known * p;
        p.timestamp = stamp;
      }
      const Pose t = align_umeyama(associate(est, gt));
      const Pose inv = known.inverse();
      CHECK((t.translation - inv.translation).norm() < 1e-9);
      CHECK(rotation_distance(t, inv) < 1e-9);
    }
  }
  SUBCASE("collinear positions are degenerate") {
    Trajectory line;
    for (int i = 0; i < 10; ++i) line.poses.push_back(Pose::from_yaw(0.0, Vec3(i, 2.0 * i, 0), 0.1 * i));
    try {
      align_umeyama(associate(line, line));
      FAIL("expected DegenerateGeometry");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::DegenerateGeometry);
    }
  }
  SUBCASE("two pairs are degenerate") {
    CHECK_THROWS_AS(align_umeyama({{Pose::identity(), Pose::identity()}, {Pose::identity(), Pose::identity()}}),
                    Error);
  }
}

TEST_CASE("ate statistics") {
  const Trajectory gt = helix(20);
  SUBCASE("perfect estimate") {
    const AteReport r = ate(associate(gt, gt), false);
    CHECK(r.rmse == 0.0);
    CHECK(r.mean == 0.0);
    CHECK(r.std == 0.0);
    CHECK(r.max == 0.0);
    CHECK(r.n_pairs == 20);
  }
  SUBCASE("constant offset") {
    Trajectory est = gt;
    for (auto& p : est.poses) p.translation += Vec3(0.0, 0.1, 0.0);
    const AteReport r = ate(associate(est, gt), false);
    CHECK(std::abs(r.rmse - 0.1) < 1e-9);
    CHECK(std::abs(r.mean - 0.1) < 1e-9);
    CHECK(r.std < 1e-9);
    const AteReport aligned = ate(associate(est, gt), true);
    CHECK(aligned.rmse < 1e-9);
  }
  SUBCASE("hand arithmetic") {
    const AteReport r = summarize({0.1, 0.3});
    CHECK(std::abs(r.mean - 0.2) < 1e-9);
    CHECK(std::abs(r.rmse - std::sqrt(0.05)) < 1e-9);
    CHECK(std::abs(r.std - 0.1) < 1e-9);
    CHECK(r.min == 0.1);
    CHECK(r.max == 0.3);
  }
}

TEST_CASE("ate properties") {
  const Trajectory gt = helix(50);
  std::mt19937_64 rng(21);
  std::normal_distribution<double> noise(0.0, 0.05);
  for (int trial = 0; trial < 20; ++trial) {
    Trajectory est = gt;
    for (auto& p : est.poses) p.translation += Vec3(noise(rng), noise(rng), noise(rng));
    const AteReport base = ate(associate(est, gt), true);
    CHECK(base.rmse >= base.mean);
    CHECK(base.min <= base.mean);
    CHECK(base.mean <= base.max);
    const auto errs = translation_errors(associate(est, gt), true);
    double var = 0.0;
    for (double e : errs) var += (e - base.mean) * (e - base.mean);
    var /= static_cast<double>(errs.size());
    CHECK(std::abs(base.std * base.std - var) < 1e-9);
    CHECK(std::abs(base.rmse * base.rmse - (base.mean * base.mean + var)) < 1e-9);

    const Pose moved = test::random_pose(rng, std::numbers::pi, 50.0);
    Trajectory est2 = est;
    for (auto& p : est2.poses) {
      const double stamp = p.timestamp;
      p = moved * p;
      p.timestamp = stamp;
    }
    const AteReport r = ate(associate(est2, gt), true);
    CHECK(std::abs(r.rmse - base.rmse) < 1e-9);
    CHECK(std::abs(r.mean - base.mean) < 1e-9);
    CHECK(std::abs(r.std - base.std) < 1e-9);
    CHECK(std::abs(r.max - base.max) < 1e-9);
    CHECK(std::abs(r.min - base.min) < 1e-9);
  }
}

TEST_CASE("report formats") {
  const AteReport r = summarize({0.1, 0.3});
  const std::string kv = format_key_values(r);
  CHECK(kv.find("rmse=") != std::string::npos);
  CHECK(kv.find("n_pairs=2") != std::string::npos);
  const std::string table = format_table(r);
  CHECK(table.find("rmse") != std::string::npos);
  CHECK(table.find("0.2236") != std::string::npos);
}
