#pragma once

#include "featsense/types.hpp"

#include <atomic>
#include <cstdint>
#include <future>
#include <memory>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

namespace featsense::refine {

struct VoxelKey {
  std::int64_t x = 0, y = 0, z = 0;
  bool operator==(const VoxelKey&) const = default;
  auto operator<=>(const VoxelKey&) const = default;
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const noexcept {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 73856093u;
    h ^= static_cast<std::uint64_t>(k.y) * 19349669u;
    h ^= static_cast<std::uint64_t>(k.z) * 83492791u;
    return static_cast<std::size_t>(h);
  }
};

struct VoxelDistribution {
  std::size_t count = 0;
  Vec3 mean = Vec3::Zero();
  Mat3 cov = Mat3::Zero();
};

/// Per-voxel Gaussian aggregated from point distributions: plain
/// count-weighted mean of member positions and member covariances.
class VoxelDistributionMap {
 public:
  explicit VoxelDistributionMap(double voxel_size = 0.5) : voxel_size_(voxel_size) {}

  double voxel_size() const { return voxel_size_; }
  std::size_t size() const { return cells_.size(); }
  bool empty() const { return cells_.empty(); }

  VoxelKey key_of(const Vec3& p) const;
  /// Adds points (world frame) with covariances (world frame).
  void add(std::span<const Vec3> points, std::span<const Mat3> covariances);
  /// nullptr when the voxel containing p is empty.
  const VoxelDistribution* lookup(const Vec3& p) const;
  std::vector<std::pair<VoxelKey, VoxelDistribution>> cells() const;

 private:
  struct Accumulator {
    std::size_t count = 0;
    Vec3 sum = Vec3::Zero();
    Mat3 cov_sum = Mat3::Zero();
    VoxelDistribution dist;
  };
  double voxel_size_;
  std::unordered_map<VoxelKey, Accumulator, VoxelKeyHash> cells_;
};

/// Covariance from the knn neighborhood (including the point), eigenvalues
/// replaced by (1e-3, 1, 1) in ascending order.
std::vector<Mat3> estimate_covariances(std::span<const Vec3> points, std::size_t knn);

VoxelDistributionMap build_voxel_distributions(std::span<const Vec3> points, double voxel_size,
                                               std::size_t knn);

struct VgicpParams {
  int max_iterations = 20;
  double lambda_init = 1e-4;
  double update_tolerance = 1e-6;
  std::size_t min_active = 50;
};

/// Mahalanobis objective sum d^T (C_voxel + R C_i R^T)^-1 d over points whose
/// voxel is populated.
double vgicp_objective(std::span<const Vec3> source, std::span<const Mat3> source_cov,
                       const VoxelDistributionMap& target, const Pose& pose, std::size_t* active = nullptr);

/// Damped Gauss-Newton on the objective above. Throws Error(Degenerate) with
/// fewer than min_active residuals.
Pose vgicp_register(std::span<const Vec3> source, std::span<const Mat3> source_cov,
                    const VoxelDistributionMap& target, const Pose& init, const VgicpParams& params = {});

struct RefineParams {
  double trigger_distance = 5.0;
  double voxel_size = 0.5;
  std::size_t knn = 10;
  double scan_leaf = 0.2;  // per-scan downsampling before registration
  bool realtime = false;
  VgicpParams vgicp;
};

struct PendingScan {
  std::vector<Vec3> points;  // sensor frame, downsampled
  Pose incremental;          // relative to the anchor scan
};

/// Immutable snapshot handed to a (possibly background) refinement.
struct RefineJob {
  std::vector<PendingScan> scans;
  Pose current_global;  // global pose of the newest scan when triggered
  RefineParams params;
};

/// Scans collected since the last refinement, anchored at the scan that ended
/// the previous window.
class RefineState {
 public:
  explicit RefineState(RefineParams params = {});

  const RefineParams& params() const { return params_; }
  double distance_since_last() const { return distance_since_last_; }
  const std::vector<PendingScan>& pending() const { return pending_; }
  bool triggered() const { return distance_since_last_ >= params_.trigger_distance; }

  /// Records a scan (sensor frame points) registered at `odom_pose`.
  void push(std::span<const Vec3> points, const Pose& odom_pose);

  /// Snapshot of the pending scans; resets the window to the newest scan.
  RefineJob take_job(const Pose& current_global);

  void set_in_progress(bool v) { in_progress_->store(v); }
  bool in_progress() const { return in_progress_->load(); }

  /// Testing hook for the distance accumulator.
  void set_distance_since_last(double d) { distance_since_last_ = d; }

 private:
  RefineParams params_;
  std::vector<PendingScan> pending_;
  Pose anchor_odom_;
  Pose last_odom_;
  bool has_anchor_ = false;
  double distance_since_last_ = 0.0;
  std::shared_ptr<std::atomic<bool>> in_progress_ = std::make_shared<std::atomic<bool>>(false);

};

/// Post-registers every pending scan in order against the scans before it,
/// each seeded with the odometry increment applied to its refined
/// predecessor. Returns the world-frame correction C with
/// C * current_global = refined newest pose, or nullopt when the final
/// registration is degenerate.
std::optional<Pose> run_refine_job(const RefineJob& job);

/// Synchronous trigger check + refinement. Returns nullopt when the trigger
/// distance is not reached, when a realtime refinement is still running, or
/// on degenerate registration.
std::optional<Pose> maybe_refine(RefineState& state, const Pose& current_global);

/// Background refinement, one job at a time.
class AsyncRefiner {
 public:
  AsyncRefiner() = default;
  ~AsyncRefiner();
  AsyncRefiner(const AsyncRefiner&) = delete;
  AsyncRefiner& operator=(const AsyncRefiner&) = delete;

  /// Starts a job if triggered and idle; returns whether it started.
  bool try_start(RefineState& state, const Pose& current_global);
  /// Non-blocking; returns a finished correction once.
  std::optional<Pose> poll();
  /// Blocks for an in-flight job.
  std::optional<Pose> wait();
  bool busy() const { return future_.valid(); }

 private:
  std::future<std::optional<Pose>> future_;
  RefineState* marker_owner_ = nullptr;
};

}  // namespace featsense::refine
