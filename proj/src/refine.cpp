#include "featsense/refine.hpp"

#include "featsense/error.hpp"
#include "featsense/kdtree.hpp"
#include "featsense/odometry.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace featsense::refine {

VoxelKey VoxelDistributionMap::key_of(const Vec3& p) const {
  return {static_cast<std::int64_t>(std::floor(p.x() / voxel_size_)),
          static_cast<std::int64_t>(std::floor(p.y() / voxel_size_)),
          static_cast<std::int64_t>(std::floor(p.z() / voxel_size_))};
}

void VoxelDistributionMap::add(std::span<const Vec3> points, std::span<const Mat3> covariances) {
  if (points.size() != covariances.size())
    throw Error(Errc::DimensionMismatch, "points and covariances differ in length");
  for (std::size_t i = 0; i < points.size(); ++i) {
    Accumulator& a = cells_[key_of(points[i])];
    ++a.count;
    a.sum += points[i];
    a.cov_sum += covariances[i];
    const double n = static_cast<double>(a.count);
    a.dist.count = a.count;
    a.dist.mean = a.sum / n;
    a.dist.cov = a.cov_sum / n;
  }
}

const VoxelDistribution* VoxelDistributionMap::lookup(const Vec3& p) const {
  const auto it = cells_.find(key_of(p));
  return it == cells_.end() ? nullptr : &it->second.dist;
}

std::vector<std::pair<VoxelKey, VoxelDistribution>> VoxelDistributionMap::cells() const {
  std::vector<std::pair<VoxelKey, VoxelDistribution>> out;
  out.reserve(cells_.size());
  for (const auto& [k, a] : cells_) out.emplace_back(k, a.dist);
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

std::vector<Mat3> estimate_covariances(std::span<const Vec3> points, std::size_t knn) {
  if (points.size() < knn) throw Error(Errc::TooFewPoints, "fewer points than knn");
  const KdTree tree(std::vector<Vec3>(points.begin(), points.end()));
  std::vector<Mat3> out(points.size());
  std::vector<std::size_t> idx;
  std::vector<double> d2;
  const Vec3 reg(1e-3, 1.0, 1.0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    tree.knn(points[i], knn, idx, d2);
    Vec3 mean = Vec3::Zero();
    for (std::size_t j : idx) mean += points[j];
    mean /= static_cast<double>(idx.size());
    Mat3 cov = Mat3::Zero();
    for (std::size_t j : idx) {
      const Vec3 d = points[j] - mean;
      cov += d * d.transpose();
    }
    cov /= static_cast<double>(idx.size());
    Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
    const Mat3& u = es.eigenvectors();
    Mat3 c = u * reg.asDiagonal() * u.transpose();
    out[i] = 0.5 * (c + c.transpose());
  }
  return out;
}

VoxelDistributionMap build_voxel_distributions(std::span<const Vec3> points, double voxel_size,
                                               std::size_t knn) {
  if (!(voxel_size > 0.0)) throw Error(Errc::TooFewPoints, "voxel_size must be > 0");
  const std::vector<Mat3> covs = estimate_covariances(points, knn);
  VoxelDistributionMap map(voxel_size);
  map.add(points, covs);
  return map;
}

namespace {

struct VgicpSystem {
  Mat6 h = Mat6::Zero();
  Vec6 b = Vec6::Zero();
  double cost = 0.0;
  std::size_t active = 0;
};

VgicpSystem vgicp_system(std::span<const Vec3> source, std::span<const Mat3> source_cov,
                         const VoxelDistributionMap& target, const Pose& pose, bool with_jacobians) {
  VgicpSystem sys;
  const Mat3 r = pose.rotation_matrix();
  for (std::size_t i = 0; i < source.size(); ++i) {
    const Vec3 q = r * source[i] + pose.translation;
    const VoxelDistribution* cell = target.lookup(q);
    if (cell == nullptr) continue;
    const Vec3 d = cell->mean - q;
    const Mat3 m = (cell->cov + r * source_cov[i] * r.transpose()).inverse();
    sys.cost += d.dot(m * d);
    ++sys.active;
    if (!with_jacobians) continue;
    Eigen::Matrix<double, 3, 6> j;
    j.leftCols<3>() = r * skew(source[i]);
    j.rightCols<3>() = -r;
    sys.h += j.transpose() * m * j;
    sys.b += j.transpose() * m * d;
  }
  return sys;
}

}  // namespace

double vgicp_objective(std::span<const Vec3> source, std::span<const Mat3> source_cov,
                       const VoxelDistributionMap& target, const Pose& pose, std::size_t* active) {
  const VgicpSystem sys = vgicp_system(source, source_cov, target, pose, false);
  if (active) *active = sys.active;
  return sys.cost;
}

Pose vgicp_register(std::span<const Vec3> source, std::span<const Mat3> source_cov,
                    const VoxelDistributionMap& target, const Pose& init, const VgicpParams& params) {
  if (target.empty()) throw Error(Errc::Degenerate, "empty target distribution map");
  if (source.size() != source_cov.size())
    throw Error(Errc::DimensionMismatch, "source points and covariances differ in length");
  Pose pose = init;
  double lambda = params.lambda_init;
  VgicpSystem sys = vgicp_system(source, source_cov, target, pose, true);
  if (sys.active < params.min_active)
    throw Error(Errc::Degenerate, "only " + std::to_string(sys.active) + " active residuals");
  for (int it = 0; it < params.max_iterations; ++it) {
    const Vec6 dx = -(sys.h + lambda * Mat6::Identity()).ldlt().solve(sys.b);
    const Pose candidate = retract(pose, dx);
    VgicpSystem next = vgicp_system(source, source_cov, target, candidate, true);
    if (next.active >= params.min_active && next.cost < sys.cost) {
      pose = candidate;
      sys = std::move(next);
      lambda = std::max(lambda / 10.0, 1e-12);
    } else {
      lambda *= 10.0;
    }
    if (dx.norm() < params.update_tolerance) break;
  }
  pose.normalize();
  pose.timestamp = init.timestamp;
  return pose;
}

RefineState::RefineState(RefineParams params) : params_(params) {}

void RefineState::push(std::span<const Vec3> points, const Pose& odom_pose) {
  PendingScan scan;
  scan.points = params_.scan_leaf > 0.0 ? odometry::voxel_downsample(points, params_.scan_leaf)
                                        : std::vector<Vec3>(points.begin(), points.end());
  if (!has_anchor_) {
    anchor_odom_ = odom_pose;
    has_anchor_ = true;
    scan.incremental = Pose::identity(odom_pose.timestamp);
  } else {
    scan.incremental = anchor_odom_.inverse() * odom_pose;
    scan.incremental.timestamp = odom_pose.timestamp;
    distance_since_last_ += (odom_pose.translation - last_odom_.translation).norm();
  }
  last_odom_ = odom_pose;
  pending_.push_back(std::move(scan));
}

RefineJob RefineState::take_job(const Pose& current_global) {
  RefineJob job{pending_, current_global, params_};
  PendingScan newest = std::move(pending_.back());
  newest.incremental = Pose::identity(last_odom_.timestamp);
  pending_.clear();
  pending_.push_back(std::move(newest));
  anchor_odom_ = last_odom_;
  distance_since_last_ = 0.0;
  return job;
}

std::optional<Pose> run_refine_job(const RefineJob& job) {
  const auto& scans = job.scans;
  if (scans.size() < 2) return std::nullopt;
  const RefineParams& p = job.params;
  VoxelDistributionMap target(p.voxel_size);

  auto add_scan = [&](const PendingScan& s, const std::vector<Mat3>& covs, const Pose& placement) {
    const Mat3 r = placement.rotation_matrix();
    std::vector<Vec3> pts(s.points.size());
    std::vector<Mat3> cw(s.points.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      pts[i] = placement.apply(s.points[i]);
      cw[i] = r * covs[i] * r.transpose();
    }
    target.add(pts, cw);
  };

  auto covariances = [&](const PendingScan& s) -> std::optional<std::vector<Mat3>> {
    if (s.points.size() < p.knn) return std::nullopt;
    return estimate_covariances(s.points, p.knn);
  };

  Pose refined_prev = scans.front().incremental;
  if (auto c0 = covariances(scans.front())) add_scan(scans.front(), *c0, refined_prev);

  for (std::size_t k = 1; k < scans.size(); ++k) {
    const bool newest = k + 1 == scans.size();
    const Pose seed = refined_prev * (scans[k - 1].incremental.inverse() * scans[k].incremental);
    const auto covs = covariances(scans[k]);
    Pose refined = seed;
    if (!covs || target.empty()) {
      if (newest) return std::nullopt;
    } else {
      try {
        refined = vgicp_register(scans[k].points, *covs, target, seed, p.vgicp);
      } catch (const Error& e) {
        if (e.code() != Errc::Degenerate) throw;
        if (newest) return std::nullopt;
        refined = seed;
      }
      if (!newest) add_scan(scans[k], *covs, refined);
    }
    refined_prev = refined;
  }

  const Pose& inc_newest = scans.back().incremental;
  const Pose anchor_global = job.current_global * inc_newest.inverse();
  const Pose refined_global = anchor_global * refined_prev;
  Pose correction = refined_global * job.current_global.inverse();
  correction.normalize();
  correction.timestamp = job.current_global.timestamp;
  return correction;
}

std::optional<Pose> maybe_refine(RefineState& state, const Pose& current_global) {
  if (!state.triggered()) return std::nullopt;
  if (state.params().realtime && state.in_progress()) return std::nullopt;
  const RefineJob job = state.take_job(current_global);
  return run_refine_job(job);
}

AsyncRefiner::~AsyncRefiner() {
  if (future_.valid()) future_.wait();
}

bool AsyncRefiner::try_start(RefineState& state, const Pose& current_global) {
  if (!state.triggered() || state.in_progress() || future_.valid()) return false;
  RefineJob job = state.take_job(current_global);
  state.set_in_progress(true);
  future_ = std::async(std::launch::async, [job = std::move(job)]() {
    std::optional<Pose> out;
    try {
      out = run_refine_job(job);
    } catch (...) {
      out.reset();
    }
    return out;
  });
  marker_owner_ = &state;
  return true;
}

std::optional<Pose> AsyncRefiner::poll() {
  if (!future_.valid()) return std::nullopt;
  if (future_.wait_for(std::chrono::seconds(0)) != std::future_status::ready) return std::nullopt;
  return wait();
}

std::optional<Pose> AsyncRefiner::wait() {
  if (!future_.valid()) return std::nullopt;
  std::optional<Pose> out = future_.get();
  if (marker_owner_) marker_owner_->set_in_progress(false);
  marker_owner_ = nullptr;
  return out;
}

}  // namespace featsense::refine
