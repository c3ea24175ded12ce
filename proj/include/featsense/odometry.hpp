#pragma once

#include "featsense/features.hpp"
#include "featsense/kdtree.hpp"
#include "featsense/types.hpp"

#include <optional>
#include <span>
#include <vector>

namespace featsense::odometry {

enum class WeightMode { Curvature, Uniform };

struct OdometryParams {
  int opt_steps = 5;
  double eig_ratio = 3.0;
  double max_point_dist = 0.2;
  double edge_half_len = 0.1;
  double corr_max_dist = 1.0;
  double huber_delta = 0.1;
  WeightMode weight_mode = WeightMode::Curvature;
  // Thresholds the curvature weights are relative to (same as FeatureParams).
  double edge_min = 0.1;
  double surf_max = 0.05;
  int max_inner_iterations = 10;
  double lambda_init = 1e-4;
  double update_tolerance = 1e-6;
  std::size_t min_correspondences = 10;
  double leaf_edge = 0.4;
  double leaf_surf = 0.8;
  double local_radius = 100.0;
};

/// Edge and surface feature maps in world frame, each behind a kd-tree.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(std::vector<Vec3> edges, std::vector<Vec3> surfaces);

  const KdTree& edges() const { return edges_; }
  const KdTree& surfaces() const { return surfaces_; }
  bool empty() const { return edges_.empty() && surfaces_.empty(); }
  const Eigen::AlignedBox3d& extents() const { return extents_; }

 private:
  KdTree edges_;
  KdTree surfaces_;
  Eigen::AlignedBox3d extents_;
};

struct EdgeFit {
  Vec3 direction;  // unit
  Vec3 center;
};

struct PlaneFit {
  Vec3 normal;  // unit
  Vec3 point;
};

/// Principal direction of the neighbors, accepted iff the largest covariance
/// eigenvalue exceeds eig_ratio times the middle one.
std::optional<EdgeFit> fit_edge(std::span<const Vec3> neighbors, double eig_ratio);

/// Smallest-eigenvalue normal through the centroid, accepted iff every
/// neighbor is closer than max_point_dist to the plane.
std::optional<PlaneFit> fit_plane(std::span<const Vec3> neighbors, double max_point_dist);

struct EdgeCorrespondence {
  Vec3 p_e;  // sensor frame
  Vec3 p_ea;
  Vec3 p_eb;
  double weight = 1.0;
};

struct SurfaceCorrespondence {
  Vec3 p_s;  // sensor frame
  Vec3 n_hat;
  Vec3 p_g;
  double weight = 1.0;
};

struct Correspondences {
  std::vector<EdgeCorrespondence> edges;
  std::vector<SurfaceCorrespondence> surfaces;
  std::size_t size() const { return edges.size() + surfaces.size(); }
};

double edge_weight(double curvature, const OdometryParams& params);
double surface_weight(double curvature, const OdometryParams& params);

Correspondences build_correspondences(const features::FeatureCloud& features, const FeatureMap& map,
                                      const Pose& pose, const OdometryParams& params);

/// Point-to-line distance of the transformed feature.
double edge_residual(const EdgeCorrespondence& c, const Pose& pose);
/// Signed point-to-plane distance of the transformed feature.
double surface_residual(const SurfaceCorrespondence& c, const Pose& pose);

/// Residual value and its 1x6 Jacobian w.r.t. the local coordinates of
/// `retract` at zero. The edge Jacobian is undefined at zero residual and
/// returned as zero there.
struct ScalarJacobian {
  double value = 0.0;
  Eigen::Matrix<double, 1, 6> jacobian = Eigen::Matrix<double, 1, 6>::Zero();
};
ScalarJacobian edge_residual_jacobian(const EdgeCorrespondence& c, const Pose& pose);
ScalarJacobian surface_residual_jacobian(const SurfaceCorrespondence& c, const Pose& pose);

/// Smooth vector form of the edge residual, (T p - a) x (a - b) / |a - b|,
/// whose norm equals edge_residual. Used by the solver.
struct VectorJacobian {
  Vec3 value = Vec3::Zero();
  Eigen::Matrix<double, 3, 6> jacobian = Eigen::Matrix<double, 3, 6>::Zero();
};
VectorJacobian edge_vector_jacobian(const EdgeCorrespondence& c, const Pose& pose);

/// Robustified weighted objective sum w * huber(f).
double objective(const Correspondences& corr, const Pose& pose, double huber_delta);

/// Gauss-Newton normal equations at `pose` (Huber IRLS weights).
void normal_equations(const Correspondences& corr, const Pose& pose, double huber_delta, Mat6& hessian,
                      Vec6& gradient);

struct SolveStats {
  int inner_iterations = 0;
  std::vector<double> accepted_costs;
};

/// Damped Gauss-Newton with the correspondences held fixed. Throws
/// Error(Degenerate) on rank-deficient normal equations.
Pose solve_fixed(const Correspondences& corr, const Pose& init, const OdometryParams& params,
                 SolveStats* stats = nullptr);

/// opt_steps rounds of {correspondences, damped Gauss-Newton}.
Pose register_scan(const features::FeatureCloud& features, const FeatureMap& map, const Pose& init,
                   const OdometryParams& params);

/// Constant-velocity extrapolation prev * (prev2^-1 * prev).
Pose predict_motion(const Pose& prev, const Pose& prev2);

/// Inserts transformed features into empty voxels (occupied voxels keep their point) and crops to local_radius
/// around the pose position.
FeatureMap update_feature_maps(const FeatureMap& map, const features::FeatureCloud& features,
                               const Pose& pose, const OdometryParams& params);

/// Voxel-grid centroid downsampling; output sorted by voxel key.
std::vector<Vec3> voxel_downsample(std::span<const Vec3> points, double leaf);

}  // namespace featsense::odometry
