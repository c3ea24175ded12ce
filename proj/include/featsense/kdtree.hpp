#pragma once

#include "featsense/types.hpp"

#include <cstddef>
#include <vector>

namespace featsense {

/// Static 3-D kd-tree with exact k-nearest-neighbor queries.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(std::vector<Vec3> points, std::size_t leaf_size = 8);

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const std::vector<Vec3>& points() const { return points_; }

  /// Up to k nearest points, ascending squared distance (ties by index).
  void knn(const Vec3& query, std::size_t k, std::vector<std::size_t>& indices,
           std::vector<double>& sq_dists) const;

 private:
  struct Node {
    std::size_t begin = 0, end = 0;  // range into order_ for leaves
    int axis = -1;                   // -1 marks a leaf
    double split = 0.0;
    std::size_t left = 0, right = 0;
  };

  std::size_t build(std::size_t begin, std::size_t end);

  std::vector<Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  std::size_t leaf_size_ = 8;
};

}  // namespace featsense
