#pragma once

#include "featsense/types.hpp"

#include <string>
#include <utility>
#include <vector>

namespace featsense::eval {

/// (estimated, ground truth)
using PosePair = std::pair<Pose, Pose>;

struct AteReport {
  double rmse = 0.0;
  double mean = 0.0;
  double std = 0.0;  // population
  double min = 0.0;
  double max = 0.0;
  std::size_t n_pairs = 0;
};

/// Greedy nearest-timestamp association: candidate pairs are taken in order
/// of increasing |dt|, each estimate and each ground-truth pose at most once.
/// Output is sorted by estimate timestamp. Throws NoOverlap if nothing pairs.
std::vector<PosePair> associate(const Trajectory& est, const Trajectory& gt, double max_dt = 0.02);

/// Rigid transform T (no scale) minimizing sum |T * est - gt|^2 over
/// positions. Throws DegenerateGeometry for fewer than 3 or collinear pairs.
Pose align_umeyama(const std::vector<PosePair>& pairs);

std::vector<double> translation_errors(const std::vector<PosePair>& pairs, bool aligned);
AteReport summarize(const std::vector<double>& errors);
AteReport ate(const std::vector<PosePair>& pairs, bool aligned);

std::string format_table(const AteReport& r);
std::string format_key_values(const AteReport& r);

}  // namespace featsense::eval
