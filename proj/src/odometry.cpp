#include "featsense/odometry.hpp"

#include "featsense/error.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <tuple>

namespace featsense::odometry {

namespace {

struct Moments {
  Vec3 mean;
  Mat3 cov;
};

Moments moments(std::span<const Vec3> pts) {
  Vec3 mean = Vec3::Zero();
  for (const Vec3& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Mat3 cov = Mat3::Zero();
  for (const Vec3& p : pts) {
    const Vec3 d = p - mean;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(pts.size());
  return {mean, cov};
}

double huber_rho(double f, double delta) {
  const double a = std::abs(f);
  return a <= delta ? 0.5 * f * f : delta * (a - 0.5 * delta);
}

double huber_weight(double f, double delta) {
  const double a = std::abs(f);
  return a <= delta ? 1.0 : delta / a;
}

// d(T exp(xi) p)/d xi at xi = 0.
Eigen::Matrix<double, 3, 6> point_jacobian(const Pose& pose, const Vec3& p) {
  const Mat3 r = pose.rotation_matrix();
  Eigen::Matrix<double, 3, 6> j;
  j.leftCols<3>() = -r * skew(p);
  j.rightCols<3>() = r;
  return j;
}

}  // namespace

FeatureMap::FeatureMap(std::vector<Vec3> edges, std::vector<Vec3> surfaces) {
  for (const Vec3& p : edges) extents_.extend(p);
  for (const Vec3& p : surfaces) extents_.extend(p);
  edges_ = KdTree(std::move(edges));
  surfaces_ = KdTree(std::move(surfaces));
}

std::optional<EdgeFit> fit_edge(std::span<const Vec3> neighbors, double eig_ratio) {
  if (neighbors.size() < 2) return std::nullopt;
  const Moments m = moments(neighbors);
  Eigen::SelfAdjointEigenSolver<Mat3> es(m.cov);
  const Vec3 ev = es.eigenvalues();  // ascending
  if (!(ev(2) > eig_ratio * ev(1))) return std::nullopt;
  return EdgeFit{es.eigenvectors().col(2).normalized(), m.mean};
}

std::optional<PlaneFit> fit_plane(std::span<const Vec3> neighbors, double max_point_dist) {
  if (neighbors.size() < 3) return std::nullopt;
  const Moments m = moments(neighbors);
  Eigen::SelfAdjointEigenSolver<Mat3> es(m.cov);
  // Need two directions of spread for the normal to be defined.
  if (!(es.eigenvalues()(1) > 1e-12)) return std::nullopt;
  const Vec3 n = es.eigenvectors().col(0).normalized();
  for (const Vec3& p : neighbors)
    if (!(std::abs(n.dot(p - m.mean)) < max_point_dist)) return std::nullopt;
  return PlaneFit{n, m.mean};
}

double edge_weight(double curvature, const OdometryParams& params) {
  if (params.weight_mode == WeightMode::Uniform) return 1.0;
  return std::min(1.0, curvature / params.edge_min);
}

double surface_weight(double curvature, const OdometryParams& params) {
  if (params.weight_mode == WeightMode::Uniform) return 1.0;
  return std::min(1.0, params.surf_max / std::max(curvature, 1e-12));
}

Correspondences build_correspondences(const features::FeatureCloud& features, const FeatureMap& map,
                                      const Pose& pose, const OdometryParams& params) {
  if (map.empty()) throw Error(Errc::MapEmpty, "feature map is empty");
  constexpr std::size_t k = 5;
  const double gate = params.corr_max_dist * params.corr_max_dist;
  Correspondences out;
  std::vector<std::size_t> idx;
  std::vector<double> d2;
  std::vector<Vec3> nb;

  auto gather = [&](const KdTree& tree, const Vec3& q) {
    tree.knn(q, k, idx, d2);
    if (idx.size() < k || d2.back() > gate) return false;
    nb.clear();
    for (std::size_t i : idx) nb.push_back(tree.points()[i]);
    return true;
  };

  if (map.edges().size() >= k) {
    for (const auto& f : features.edges) {
      if (!gather(map.edges(), pose.apply(f.point))) continue;
      const auto fit = fit_edge(nb, params.eig_ratio);
      if (!fit) continue;
      out.edges.push_back({f.point, fit->center + params.edge_half_len * fit->direction,
                           fit->center - params.edge_half_len * fit->direction,
                           edge_weight(f.curvature, params)});
    }
  }
  if (map.surfaces().size() >= k) {
    for (const auto& f : features.surfaces) {
      if (!gather(map.surfaces(), pose.apply(f.point))) continue;
      const auto fit = fit_plane(nb, params.max_point_dist);
      if (!fit) continue;
      out.surfaces.push_back({f.point, fit->normal, fit->point, surface_weight(f.curvature, params)});
    }
  }
  return out;
}

double edge_residual(const EdgeCorrespondence& c, const Pose& pose) {
  const Vec3 q = pose.apply(c.p_e);
  return (q - c.p_ea).cross(q - c.p_eb).norm() / (c.p_ea - c.p_eb).norm();
}

double surface_residual(const SurfaceCorrespondence& c, const Pose& pose) {
  return (pose.apply(c.p_s) - c.p_g).dot(c.n_hat);
}

VectorJacobian edge_vector_jacobian(const EdgeCorrespondence& c, const Pose& pose) {
  const Vec3 q = pose.apply(c.p_e);
  const Vec3 d = c.p_ea - c.p_eb;
  const double inv_len = 1.0 / d.norm();
  VectorJacobian out;
  out.value = (q - c.p_ea).cross(d) * inv_len;
  out.jacobian = -skew(d) * inv_len * point_jacobian(pose, c.p_e);
  return out;
}

ScalarJacobian edge_residual_jacobian(const EdgeCorrespondence& c, const Pose& pose) {
  const VectorJacobian v = edge_vector_jacobian(c, pose);
  ScalarJacobian out;
  out.value = v.value.norm();
  if (out.value > 0.0) out.jacobian = v.value.transpose() / out.value * v.jacobian;
  return out;
}

ScalarJacobian surface_residual_jacobian(const SurfaceCorrespondence& c, const Pose& pose) {
  ScalarJacobian out;
  out.value = surface_residual(c, pose);
  out.jacobian = c.n_hat.transpose() * point_jacobian(pose, c.p_s);
  return out;
}

double objective(const Correspondences& corr, const Pose& pose, double huber_delta) {
  double sum = 0.0;
  for (const auto& c : corr.edges) sum += c.weight * huber_rho(edge_residual(c, pose), huber_delta);
  for (const auto& c : corr.surfaces) sum += c.weight * huber_rho(surface_residual(c, pose), huber_delta);
  return sum;
}

void normal_equations(const Correspondences& corr, const Pose& pose, double huber_delta, Mat6& hessian,
                      Vec6& gradient) {
  hessian.setZero();
  gradient.setZero();
  for (const auto& c : corr.edges) {
    const VectorJacobian v = edge_vector_jacobian(c, pose);
    const double w = c.weight * huber_weight(v.value.norm(), huber_delta);
    hessian += w * v.jacobian.transpose() * v.jacobian;
    gradient += w * v.jacobian.transpose() * v.value;
  }
  for (const auto& c : corr.surfaces) {
    const ScalarJacobian s = surface_residual_jacobian(c, pose);
    const double w = c.weight * huber_weight(s.value, huber_delta);
    hessian += w * s.jacobian.transpose() * s.jacobian;
    gradient += w * s.jacobian.transpose() * s.value;
  }
}

Pose solve_fixed(const Correspondences& corr, const Pose& init, const OdometryParams& params,
                 SolveStats* stats) {
  Pose pose = init;
  double cost = objective(corr, pose, params.huber_delta);
  if (stats) stats->accepted_costs.push_back(cost);
  double lambda = params.lambda_init;
  Mat6 h;
  Vec6 g;
  bool fresh = false;
  for (int it = 0; it < params.max_inner_iterations; ++it) {
    if (!fresh) {
      normal_equations(corr, pose, params.huber_delta, h, g);
      if (it == 0) {
        Eigen::SelfAdjointEigenSolver<Mat6> es(h, Eigen::EigenvaluesOnly);
        const double lo = es.eigenvalues()(0);
        const double hi = es.eigenvalues()(5);
        if (!(hi > 0.0) || lo <= 1e-9 * hi)
          throw Error(Errc::Degenerate, "rank-deficient normal equations");
      }
      fresh = true;
    }
    if (stats) ++stats->inner_iterations;
    const Mat6 damped = h + lambda * Mat6::Identity();
    const Vec6 dx = -damped.ldlt().solve(g);
    const Pose candidate = retract(pose, dx);
    const double c = objective(corr, candidate, params.huber_delta);
    if (c < cost) {
      pose = candidate;
      cost = c;
      lambda = std::max(lambda / 10.0, 1e-12);
      fresh = false;
      if (stats) stats->accepted_costs.push_back(cost);
    } else {
      lambda *= 10.0;
    }
    if (dx.norm() < params.update_tolerance) break;
  }
  pose.normalize();
  return pose;
}

Pose register_scan(const features::FeatureCloud& features, const FeatureMap& map, const Pose& init,
                   const OdometryParams& params) {
  Pose pose = init;
  for (int step = 0; step < std::max(1, params.opt_steps); ++step) {
    const Correspondences corr = build_correspondences(features, map, pose, params);
    if (corr.size() < params.min_correspondences)
      throw Error(Errc::Degenerate, "only " + std::to_string(corr.size()) + " correspondences");
    pose = solve_fixed(corr, pose, params);
  }
  pose.timestamp = init.timestamp;
  return pose;
}

Pose predict_motion(const Pose& prev, const Pose& prev2) {
  Pose pred = prev * (prev2.inverse() * prev);
  pred.normalize();
  pred.timestamp = prev.timestamp + (prev.timestamp - prev2.timestamp);
  return pred;
}

namespace {

using VoxelKey = std::tuple<std::int64_t, std::int64_t, std::int64_t>;

VoxelKey voxel_key(const Vec3& p, double leaf) {
  return {static_cast<std::int64_t>(std::floor(p.x() / leaf)), static_cast<std::int64_t>(std::floor(p.y() / leaf)),
          static_cast<std::int64_t>(std::floor(p.z() / leaf))};
}

}  // namespace

std::vector<Vec3> voxel_downsample(std::span<const Vec3> points, double leaf) {
  std::map<VoxelKey, std::pair<Vec3, std::size_t>> cells;
  for (const Vec3& p : points) {
    auto [it, inserted] = cells.try_emplace(voxel_key(p, leaf), Vec3::Zero(), 0);
    it->second.first += p;
    ++it->second.second;
  }
  std::vector<Vec3> out;
  out.reserve(cells.size());
  for (const auto& [key, acc] : cells) out.push_back(acc.first / static_cast<double>(acc.second));
  return out;
}

FeatureMap update_feature_maps(const FeatureMap& map, const features::FeatureCloud& features,
                               const Pose& pose, const OdometryParams& params) {
  auto merge = [&](const KdTree& existing, const std::vector<features::FeaturePoint>& add, double leaf) {
    // Occupied voxels keep their point; new points only fill empty voxels, so the map stays anchored to
    // its first observations instead of following the latest scan.
    std::vector<Vec3> down = existing.points();
    std::set<VoxelKey> occupied;
    for (const Vec3& p : down) occupied.insert(voxel_key(p, leaf));
    std::vector<Vec3> incoming;
    incoming.reserve(add.size());
    for (const auto& f : add) incoming.push_back(pose.apply(f.point));
    for (const Vec3& p : voxel_downsample(incoming, leaf))
      if (occupied.insert(voxel_key(p, leaf)).second) down.push_back(p);
    const double r2 = params.local_radius * params.local_radius;
    std::erase_if(down, [&](const Vec3& p) { return (p - pose.translation).squaredNorm() > r2; });
    return down;
  };
  return FeatureMap(merge(map.edges(), features.edges, params.leaf_edge),
                    merge(map.surfaces(), features.surfaces, params.leaf_surf));
}

}  // namespace featsense::odometry
