#include "contreg/kdtree.hpp"

#include <algorithm>
#include <limits>

namespace contreg {

namespace {

constexpr std::size_t kLeafSize = 8;

bool better(double d2, std::size_t idx, const KdTree2::Hit& best) {
  return d2 < best.squared_distance || (d2 == best.squared_distance && idx < best.index);
}

}  // namespace

KdTree2::KdTree2(std::span<const Vec2> points) : points_(points.begin(), points.end()) {
  order_.resize(points_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    build(0, points_.size());
  }
}

int KdTree2::build(std::size_t begin, std::size_t end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{});
  if (end - begin <= kLeafSize) {
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    return id;
  }
  Eigen::Vector2d lo = points_[order_[begin]], hi = lo;
  for (std::size_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  const int axis = (hi.x() - lo.x()) >= (hi.y() - lo.y()) ? 0 : 1;
  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::size_t a, std::size_t b) {
                     return points_[a][axis] < points_[b][axis] ||
                            (points_[a][axis] == points_[b][axis] && a < b);
                   });
  const double split = points_[order_[mid]][axis];
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KdTree2::search(int node_id, const Vec2& q, Hit& best) const {
  const Node& node = nodes_[node_id];
  if (node.axis < 0) {
    for (std::size_t i = node.begin; i < node.end; ++i) {
      const std::size_t idx = order_[i];
      const double d2 = (points_[idx] - q).squaredNorm();
      if (better(d2, idx, best)) best = {idx, d2};
    }
    return;
  }
  const double diff = q[node.axis] - node.split;
  const int near = diff < 0.0 ? node.left : node.right;
  const int far = diff < 0.0 ? node.right : node.left;
  search(near, q, best);
  // Points equal to the split value can live on either side; <= keeps ties.
  if (diff * diff <= best.squared_distance) search(far, q, best);
}

KdTree2::Hit KdTree2::nearest(const Vec2& query) const {
  Hit best{std::numeric_limits<std::size_t>::max(), std::numeric_limits<double>::infinity()};
  search(0, query, best);
  return best;
}

KdTree2::Hit brute_force_nearest(std::span<const Vec2> points, const Vec2& query) {
  KdTree2::Hit best{std::numeric_limits<std::size_t>::max(),
                    std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double d2 = (points[i] - query).squaredNorm();
    if (better(d2, i, best)) best = {i, d2};
  }
  return best;
}

}  // namespace contreg
