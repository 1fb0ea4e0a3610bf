#include "pcssm/serialization.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>

namespace pcssm {

PointCloud reorder(const PointCloud& cloud, const std::vector<std::size_t>& order) {
  PointCloud out;
  out.feature_dim = cloud.feature_dim;
  out.label = cloud.label;
  for (std::size_t i : order) {
    out.coords.push_back(cloud.coords.at(i));
    for (std::size_t f = 0; f < cloud.feature_dim; ++f) {
      out.features.push_back(cloud.features[i * cloud.feature_dim + f]);
    }
    if (!cloud.point_labels.empty()) out.point_labels.push_back(cloud.point_labels[i]);
  }
  return out;
}

std::string_view axis_name(Axis axis) {
  switch (axis) {
    case Axis::z: return "Z";
    case Axis::y: return "Y";
    case Axis::x: return "X";
    case Axis::none: return "none";
  }
  return "?";
}

std::optional<Axis> parse_axis(std::string_view name) {
  if (name == "Z" || name == "z") return Axis::z;
  if (name == "Y" || name == "y") return Axis::y;
  if (name == "X" || name == "x") return Axis::x;
  if (name == "none" || name == "None") return Axis::none;
  return std::nullopt;
}

std::vector<Axis> parse_axes(std::string_view spec) {
  if (spec == "none" || spec == "None") return {Axis::none};
  bool z = false, y = false, x = false;
  for (char ch : spec) {
    switch (std::toupper(static_cast<unsigned char>(ch))) {
      case 'Z': z = true; break;
      case 'Y': y = true; break;
      case 'X': x = true; break;
      case ',': case ' ': break;
      default: throw ConfigError("unknown axis '" + std::string(1, ch) + "' in \"" + std::string(spec) + "\"");
    }
  }
  std::vector<Axis> out;
  if (z) out.push_back(Axis::z);
  if (y) out.push_back(Axis::y);
  if (x) out.push_back(Axis::x);
  if (out.empty()) throw ConfigError("empty axis set");
  return out;
}

std::string axes_label(const std::vector<Axis>& axes) {
  if (axes.size() == 1 && axes[0] == Axis::none) return "none";
  std::string s;
  for (Axis a : axes) s += axis_name(a);
  return s;
}

std::vector<std::vector<Axis>> all_axis_subsets() {
  return {{Axis::z}, {Axis::y}, {Axis::x}, {Axis::z, Axis::y}, {Axis::z, Axis::x},
          {Axis::y, Axis::x}, {Axis::z, Axis::y, Axis::x}};
}

namespace {

int coordinate_index(Axis axis) {
  switch (axis) {
    case Axis::x: return 0;
    case Axis::y: return 1;
    case Axis::z: return 2;
    case Axis::none: return -1;
  }
  return -1;
}

}  // namespace

std::vector<std::size_t> axis_permutation(std::span<const Vec3> coords, Axis axis) {
  std::vector<std::size_t> perm(coords.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  const int key = coordinate_index(axis);
  if (key < 0) return perm;
  std::stable_sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) {
    const Vec3& ca = coords[a];
    const Vec3& cb = coords[b];
    if (ca[key] != cb[key]) return ca[key] < cb[key];
    return ca < cb;  // lexicographic (x, y, z); equal tuples keep input order
  });
  return perm;
}

AxisOrder make_axis_order(std::span<const Vec3> coords, Axis axis) {
  AxisOrder o;
  o.axis = axis;
  o.perm = axis_permutation(coords, axis);
  o.inverse.resize(o.perm.size());
  for (std::size_t i = 0; i < o.perm.size(); ++i) o.inverse[o.perm[i]] = i;
  return o;
}

bool is_permutation(std::span<const std::size_t> perm, std::size_t n) {
  if (perm.size() != n) return false;
  std::vector<char> hit(n, 0);
  for (std::size_t p : perm) {
    if (p >= n || hit[p]) return false;
    hit[p] = 1;
  }
  return true;
}

std::uint64_t hilbert_index(std::array<std::uint32_t, 3> cell, unsigned order) {
  // Skilling's axes-to-transpose transform followed by bit interleaving.
  constexpr int n = 3;
  const std::uint32_t m = 1u << (order - 1);
  auto& X = cell;
  for (std::uint32_t q = m; q > 1; q >>= 1) {
    const std::uint32_t p = q - 1;
    for (int i = 0; i < n; ++i) {
      if (X[i] & q) {
        X[0] ^= p;
      } else {
        const std::uint32_t t = (X[0] ^ X[i]) & p;
        X[0] ^= t;
        X[i] ^= t;
      }
    }
  }
  for (int i = 1; i < n; ++i) X[i] ^= X[i - 1];
  std::uint32_t t = 0;
  for (std::uint32_t q = m; q > 1; q >>= 1) {
    if (X[n - 1] & q) t ^= q - 1;
  }
  for (int i = 0; i < n; ++i) X[i] ^= t;

  std::uint64_t index = 0;
  for (int b = static_cast<int>(order) - 1; b >= 0; --b) {
    for (int i = 0; i < n; ++i) index = (index << 1) | ((X[i] >> b) & 1u);
  }
  return index;
}

CurveSerialization hilbert_serialize(std::span<const Vec3> coords, double grid_size,
                                     CurveVariant variant) {
  if (!(grid_size > 0.0)) throw ContractError("hilbert_serialize: grid size must be positive");
  CurveSerialization out;
  if (coords.empty()) return out;
  Vec3 lo = coords[0], hi = coords[0];
  for (const auto& c : coords) {
    for (int k = 0; k < 3; ++k) {
      lo[k] = std::min(lo[k], c[k]);
      hi[k] = std::max(hi[k], c[k]);
    }
  }
  const double extent = std::max({hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]});
  const double ratio = extent / grid_size;
  const double bits = ratio > 1.0 ? std::ceil(std::log2(ratio)) : 1.0;
  out.order = static_cast<unsigned>(std::clamp(bits, 1.0, 16.0));
  const std::uint32_t max_cell = (1u << out.order) - 1;

  std::vector<std::uint64_t> keys(coords.size());
  bool single_cell = true;
  std::array<std::uint32_t, 3> first{};
  for (std::size_t i = 0; i < coords.size(); ++i) {
    std::array<std::uint32_t, 3> cell{};
    for (int k = 0; k < 3; ++k) {
      const double q = std::floor((coords[i][k] - lo[k]) / grid_size);
      cell[k] = static_cast<std::uint32_t>(std::clamp(q, 0.0, static_cast<double>(max_cell)));
    }
    if (i == 0) first = cell;
    if (cell != first) single_cell = false;
    if (variant == CurveVariant::trans_hilbert) std::swap(cell[0], cell[1]);
    keys[i] = hilbert_index(cell, out.order);
  }
  out.perm.resize(coords.size());
  std::iota(out.perm.begin(), out.perm.end(), std::size_t{0});
  std::stable_sort(out.perm.begin(), out.perm.end(),
                   [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
  if (single_cell && coords.size() > 1) {
    out.warning = "grid size " + std::to_string(grid_size) +
                  " puts every point in one cell; order falls back to input order";
  }
  return out;
}

double locality_score(std::span<const Vec3> coords, std::span<const std::size_t> perm) {
  const std::size_t n = coords.size();
  if (n < 2) return 0.0;
  std::vector<std::size_t> rank(n);
  for (std::size_t i = 0; i < n; ++i) rank[perm[i]] = i;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t nn = i;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d = squared_distance(coords[i], coords[j]);
      if (d < best) {
        best = d;
        nn = j;
      }
    }
    total += std::abs(static_cast<double>(rank[i]) - static_cast<double>(rank[nn]));
  }
  return total / static_cast<double>(n);
}

}  // namespace pcssm
