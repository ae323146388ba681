#include "serialtrack/neighbor_index.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>

namespace serialtrack {

namespace {
constexpr int kLeafSize = 12;

struct HitLess {
  template <typename H>
  bool operator()(const H& a, const H& b) const {
    return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index);
  }
};
}  // namespace

template <int Dim>
NeighborIndex<Dim>::NeighborIndex(std::vector<Vec<Dim>> points)
    : points_(std::move(points)) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0);
  if (!points_.empty()) root_ = build(0, static_cast<int>(points_.size()), 0);
}

template <int Dim>
int NeighborIndex<Dim>::build(int begin, int end, int depth) {
  Node node{begin, end};
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(node);
  if (end - begin <= kLeafSize) return id;

  // split along the axis of largest spread
  Vec<Dim> lo = points_[order_[begin]], hi = lo;
  for (int i = begin + 1; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  const int mid = (begin + end) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) { return points_[a][axis] < points_[b][axis]; });
  nodes_[id].axis = axis;
  nodes_[id].split = points_[order_[mid]][axis];
  const int l = build(begin, mid, depth + 1);
  const int r = build(mid, end, depth + 1);
  nodes_[id].left = l;
  nodes_[id].right = r;
  return id;
}

template <int Dim>
template <typename Visit>
void NeighborIndex<Dim>::search(int node_id, const Vec<Dim>& q, double& bound2,
                                Visit&& visit) const {
  const Node& node = nodes_[node_id];
  if (node.axis < 0) {
    for (int i = node.begin; i < node.end; ++i) {
      const int idx = order_[i];
      const double d2 = (points_[idx] - q).squaredNorm();
      if (d2 <= bound2) visit(idx, d2, bound2);
    }
    return;
  }
  const double diff = q[node.axis] - node.split;
  const int near = diff < 0 ? node.left : node.right;
  const int far = diff < 0 ? node.right : node.left;
  search(near, q, bound2, visit);
  if (diff * diff <= bound2) search(far, q, bound2, visit);
}

template <int Dim>
std::vector<typename NeighborIndex<Dim>::Hit> NeighborIndex<Dim>::knn(
    const Vec<Dim>& q, int k, double radius, int exclude) const {
  std::vector<Hit> out;
  if (root_ < 0 || k <= 0) return out;
  std::priority_queue<Hit, std::vector<Hit>, HitLess> heap;  // max-heap on (d2, idx)
  double bound2 = std::isinf(radius) ? kInf : radius * radius;
  search(root_, q, bound2, [&](int idx, double d2, double& b2) {
    if (idx == exclude) return;
    const Hit h{idx, d2};
    if (static_cast<int>(heap.size()) < k) {
      heap.push(h);
    } else if (HitLess{}(h, heap.top())) {
      heap.pop();
      heap.push(h);
    }
    if (static_cast<int>(heap.size()) == k) b2 = std::min(b2, heap.top().dist2);
  });
  out.reserve(heap.size());
  while (!heap.empty()) {
    out.push_back(heap.top());
    heap.pop();
  }
  std::reverse(out.begin(), out.end());
  return out;
}

template <int Dim>
std::vector<typename NeighborIndex<Dim>::Hit> NeighborIndex<Dim>::within(
    const Vec<Dim>& q, double radius, int exclude) const {
  std::vector<Hit> out;
  if (root_ < 0) return out;
  double bound2 = std::isinf(radius) ? kInf : radius * radius;
  search(root_, q, bound2, [&](int idx, double d2, double&) {
    if (idx != exclude) out.push_back({idx, d2});
  });
  std::sort(out.begin(), out.end(), HitLess{});
  return out;
}

template <int Dim>
typename NeighborIndex<Dim>::Hit NeighborIndex<Dim>::nearest(const Vec<Dim>& q,
                                                             int exclude) const {
  auto hits = knn(q, 1, kInf, exclude);
  if (hits.empty()) return {-1, kInf};
  return hits.front();
}

template <int Dim>
double mean_nn_spacing(const std::vector<Vec<Dim>>& points) {
  if (points.size() < 2) return 0.0;
  NeighborIndex<Dim> index(points);
  double sum = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i)
    sum += std::sqrt(index.nearest(points[i], static_cast<int>(i)).dist2);
  return sum / static_cast<double>(points.size());
}

template class NeighborIndex<2>;
template class NeighborIndex<3>;
template double mean_nn_spacing<2>(const std::vector<Vec<2>>&);
template double mean_nn_spacing<3>(const std::vector<Vec<3>>&);

}  // namespace serialtrack
