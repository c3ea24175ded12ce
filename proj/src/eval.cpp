#include "featsense/eval.hpp"

#include "featsense/error.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace featsense::eval {

std::vector<PosePair> associate(const Trajectory& est, const Trajectory& gt, double max_dt) {
  if (est.empty() || gt.empty()) throw Error(Errc::NoOverlap, "empty trajectory");
  struct Cand {
    double dt;
    std::size_t e, g;
  };
  std::vector<Cand> cands;
  // Both trajectories are time-ordered, so the window of gt poses within
  // max_dt of each estimate is contiguous.
  std::size_t lo = 0;
  for (std::size_t e = 0; e < est.size(); ++e) {
    const double te = est.poses[e].timestamp;
    while (lo < gt.size() && gt.poses[lo].timestamp < te - max_dt) ++lo;
    for (std::size_t g = lo; g < gt.size() && gt.poses[g].timestamp <= te + max_dt; ++g)
      cands.push_back({std::abs(gt.poses[g].timestamp - te), e, g});
  }
  std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.dt < b.dt; });
  std::vector<char> e_used(est.size(), 0), g_used(gt.size(), 0);
  std::vector<std::pair<std::size_t, std::size_t>> matched;
  for (const Cand& c : cands) {
    if (c.dt > max_dt || e_used[c.e] || g_used[c.g]) continue;
    e_used[c.e] = g_used[c.g] = 1;
    matched.emplace_back(c.e, c.g);
  }
  if (matched.empty()) throw Error(Errc::NoOverlap, "no timestamps within max_dt");
  std::sort(matched.begin(), matched.end());
  std::vector<PosePair> out;
  out.reserve(matched.size());
  for (auto [e, g] : matched) out.emplace_back(est.poses[e], gt.poses[g]);
  return out;
}

Pose align_umeyama(const std::vector<PosePair>& pairs) {
  if (pairs.size() < 3) throw Error(Errc::DegenerateGeometry, "alignment needs at least 3 pairs");
  const double n = static_cast<double>(pairs.size());
  Vec3 mu_e = Vec3::Zero(), mu_g = Vec3::Zero();
  for (const auto& [e, g] : pairs) {
    mu_e += e.translation;
    mu_g += g.translation;
  }
  mu_e /= n;
  mu_g /= n;
  Mat3 sigma = Mat3::Zero();
  for (const auto& [e, g] : pairs) sigma += (g.translation - mu_g) * (e.translation - mu_e).transpose();
  sigma /= n;

  Eigen::JacobiSVD<Mat3> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 s = svd.singularValues();
  if (!(s[1] > 1e-10 * s[0])) throw Error(Errc::DegenerateGeometry, "positions are collinear");
  Mat3 d = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  const Mat3 r = svd.matrixU() * d * svd.matrixV().transpose();
  return Pose::from_rt(r, mu_g - r * mu_e);
}

std::vector<double> translation_errors(const std::vector<PosePair>& pairs, bool aligned) {
  const Pose t = aligned ? align_umeyama(pairs) : Pose::identity();
  std::vector<double> err;
  err.reserve(pairs.size());
  for (const auto& [e, g] : pairs) err.push_back((t.apply(e.translation) - g.translation).norm());
  return err;
}

AteReport summarize(const std::vector<double>& errors) {
  AteReport r;
  r.n_pairs = errors.size();
  if (errors.empty()) return r;
  const double n = static_cast<double>(errors.size());
  double sum = 0.0, sq = 0.0;
  r.min = std::numeric_limits<double>::infinity();
  r.max = -std::numeric_limits<double>::infinity();
  for (double e : errors) {
    sum += e;
    sq += e * e;
    r.min = std::min(r.min, e);
    r.max = std::max(r.max, e);
  }
  r.mean = sum / n;
  r.rmse = std::sqrt(sq / n);
  double dev = 0.0;
  for (double e : errors) dev += (e - r.mean) * (e - r.mean);
  r.std = std::sqrt(dev / n);
  return r;
}

AteReport ate(const std::vector<PosePair>& pairs, bool aligned) { return summarize(translation_errors(pairs, aligned)); }

std::string format_table(const AteReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "%10s %10s %10s %10s %10s %8s\n%10.6f %10.6f %10.6f %10.6f %10.6f %8zu\n", "rmse", "mean", "std",
                "min", "max", "pairs", r.rmse, r.mean, r.std, r.min, r.max, r.n_pairs);
  return buf;
}

std::string format_key_values(const AteReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "rmse=%.9g\nmean=%.9g\nstd=%.9g\nmin=%.9g\nmax=%.9g\nn_pairs=%zu\n", r.rmse,
                r.mean, r.std, r.min, r.max, r.n_pairs);
  return buf;
}

}  // namespace featsense::eval
