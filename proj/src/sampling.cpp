#include "pcssm/sampling.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace pcssm {

namespace {

// Strict order on (distance, coordinate, index).
struct CloserThan {
  std::span<const Vec3> points;
  const std::vector<double>& dist;
  bool operator()(std::size_t a, std::size_t b) const {
    if (dist[a] != dist[b]) return dist[a] < dist[b];
    if (points[a] != points[b]) return points[a] < points[b];
    return a < b;
  }
};

}  // namespace

std::size_t canonical_seed(std::span<const Vec3> coords) {
  if (coords.empty()) throw ContractError("canonical_seed: empty point set");
  std::size_t best = 0;
  for (std::size_t i = 1; i < coords.size(); ++i) {
    if (coords[i] < coords[best]) best = i;
  }
  return best;
}

std::vector<std::size_t> fps(std::span<const Vec3> coords, std::size_t m, std::size_t seed) {
  const std::size_t L = coords.size();
  if (m == 0 || m > L) {
    throw ContractError("fps: requested " + std::to_string(m) + " samples from " + std::to_string(L) +
                        " points");
  }
  if (seed >= L) throw IndexError("fps: seed index out of range");
  std::vector<double> min_dist(L, std::numeric_limits<double>::infinity());
  std::vector<char> taken(L, 0);
  std::vector<std::size_t> out;
  out.reserve(m);
  std::size_t current = seed;
  while (true) {
    out.push_back(current);
    taken[current] = 1;
    if (out.size() == m) break;
    std::size_t best = L;
    for (std::size_t i = 0; i < L; ++i) {
      if (taken[i]) continue;
      min_dist[i] = std::min(min_dist[i], squared_distance(coords[i], coords[current]));
      if (best == L || min_dist[i] > min_dist[best] ||
          (min_dist[i] == min_dist[best] && coords[i] < coords[best])) {
        best = i;
      }
    }
    current = best;
  }
  return out;
}

std::vector<std::size_t> knn(std::span<const Vec3> points, std::span<const Vec3> queries, std::size_t k) {
  if (k == 0 || k > points.size()) {
    throw ContractError("knn: K=" + std::to_string(k) + " with " + std::to_string(points.size()) +
                        " points");
  }
  std::vector<std::size_t> out;
  out.reserve(queries.size() * k);
  std::vector<double> dist(points.size());
  std::vector<std::size_t> idx(points.size());
  for (const auto& q : queries) {
    for (std::size_t i = 0; i < points.size(); ++i) dist[i] = squared_distance(points[i], q);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      CloserThan{points, dist});
    out.insert(out.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return out;
}

InterpolationWeights interpolation_weights(std::span<const Vec3> children,
                                           std::span<const Vec3> parents) {
  if (children.empty()) throw ContractError("interpolation_weights: empty child set");
  InterpolationWeights iw;
  iw.per_point = std::min<std::size_t>(3, children.size());
  iw.indices = knn(children, parents, iw.per_point);
  iw.weights.resize(iw.indices.size());
  for (std::size_t p = 0; p < parents.size(); ++p) {
    double total = 0.0;
    for (std::size_t k = 0; k < iw.per_point; ++k) {
      const std::size_t c = iw.indices[p * iw.per_point + k];
      const double w = 1.0 / (squared_distance(children[c], parents[p]) + kInterpolationEps);
      iw.weights[p * iw.per_point + k] = w;
      total += w;
    }
    for (std::size_t k = 0; k < iw.per_point; ++k) iw.weights[p * iw.per_point + k] /= total;
  }
  return iw;
}

SampleMap build_sample_map(std::span<const Vec3> coords, std::size_t rate, std::size_t k) {
  const std::size_t L = coords.size();
  if (rate == 0 || L / rate == 0) {
    throw ContractError("downsample: rate " + std::to_string(rate) + " leaves no points from " +
                        std::to_string(L));
  }
  if (k > L) {
    throw ContractError("downsample: K=" + std::to_string(k) + " exceeds " + std::to_string(L) +
                        " points");
  }
  SampleMap map;
  map.rate = rate;
  map.k = k;
  map.selected = fps(coords, L / rate, canonical_seed(coords));
  std::vector<Vec3> centers;
  centers.reserve(map.selected.size());
  for (std::size_t s : map.selected) centers.push_back(coords[s]);
  map.neighbors = knn(coords, centers, k);
  return map;
}

}  // namespace pcssm
