#pragma once

#include "serialtrack/core.hpp"

#include <utility>
#include <vector>

namespace serialtrack {

/// Exact k-d tree over a fixed point list. Query results are sorted by
/// ascending Euclidean distance, ties broken by point index.
template <int Dim>
class NeighborIndex {
 public:
  struct Hit {
    int index;
    double dist2;
  };

  NeighborIndex() = default;
  explicit NeighborIndex(std::vector<Vec<Dim>> points);

  std::size_t size() const { return points_.size(); }
  const Vec<Dim>& point(int i) const { return points_[i]; }
  const std::vector<Vec<Dim>>& points() const { return points_; }

  /// k nearest points to q within `radius`; `exclude` (if >= 0) is skipped.
  std::vector<Hit> knn(const Vec<Dim>& q, int k, double radius = kInf,
                       int exclude = -1) const;

  /// All points with |p - q| <= radius.
  std::vector<Hit> within(const Vec<Dim>& q, double radius, int exclude = -1) const;

  /// Nearest point to q, or {-1, inf} for an empty index.
  Hit nearest(const Vec<Dim>& q, int exclude = -1) const;

 private:
  struct Node {
    int begin, end;  // range into order_
    int axis = -1;   // -1 for leaves
    double split = 0.0;
    int left = -1, right = -1;
  };

  int build(int begin, int end, int depth);
  template <typename Visit>
  void search(int node, const Vec<Dim>& q, double& bound2, Visit&& visit) const;

  std::vector<Vec<Dim>> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

extern template class NeighborIndex<2>;
extern template class NeighborIndex<3>;

/// Mean nearest-neighbor distance of a point set (0 for fewer than 2 points).
template <int Dim>
double mean_nn_spacing(const std::vector<Vec<Dim>>& points);

}  // namespace serialtrack
