#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "contreg/geometry.hpp"

namespace contreg {

/// Static 2D kd-tree for exact nearest-neighbour queries. Ties in distance
/// resolve to the lowest point index, so results equal a brute-force scan.
class KdTree2 {
 public:
  struct Hit {
    std::size_t index = 0;
    double squared_distance = 0.0;
  };

  KdTree2() = default;
  explicit KdTree2(std::span<const Vec2> points);

  bool empty() const { return points_.empty(); }
  std::size_t size() const { return points_.size(); }

  /// Precondition: !empty().
  Hit nearest(const Vec2& query) const;

 private:
  struct Node {
    int left = -1;
    int right = -1;
    std::size_t begin = 0;  // leaf range into order_
    std::size_t end = 0;
    int axis = -1;  // -1 for leaves
    double split = 0.0;
  };

  int build(std::size_t begin, std::size_t end);
  void search(int node, const Vec2& q, Hit& best) const;

  std::vector<Vec2> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

/// Reference O(n) scan with the same tie-breaking rule.
KdTree2::Hit brute_force_nearest(std::span<const Vec2> points, const Vec2& query);

}  // namespace contreg
