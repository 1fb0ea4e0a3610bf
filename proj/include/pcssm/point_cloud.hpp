#pragma once

#include <array>
#include <cstddef>
#include <vector>

namespace pcssm {

using Vec3 = std::array<double, 3>;

inline double squared_distance(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

struct PointCloud {
  std::vector<Vec3> coords;
  std::vector<double> features;  // row-major [L, feature_dim]
  std::size_t feature_dim = 0;
  int label = -1;                // per-cloud class, -1 when absent
  std::vector<int> point_labels;  // per-point part labels, empty when absent

  std::size_t size() const { return coords.size(); }
};

// Same cloud with its points reordered: point i of the result is point
// order[i] of `cloud`.
PointCloud reorder(const PointCloud& cloud, const std::vector<std::size_t>& order);

}  // namespace pcssm
