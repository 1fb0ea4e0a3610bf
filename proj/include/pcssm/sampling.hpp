#pragma once

// Cardinality reduction (farthest point sampling + kNN + shared-MLP max
// pooling) and recovery (3-NN inverse-distance interpolation + skip path).

#include <span>
#include <string>
#include <vector>

#include "pcssm/layers.hpp"
#include "pcssm/point_cloud.hpp"
#include "pcssm/serialization.hpp"

namespace pcssm {

inline constexpr double kInterpolationEps = 1e-8;

// Greedy max-min subset of m points starting at `seed`. Ties go to the
// lexicographically smaller coordinate, then the lower index.
std::vector<std::size_t> fps(std::span<const Vec3> coords, std::size_t m, std::size_t seed = 0);

// Index of the lexicographically smallest coordinate; an input-order
// independent FPS seed.
std::size_t canonical_seed(std::span<const Vec3> coords);

// K nearest points of `points` for every query (squared distance, ties by
// coordinate then index), flattened [queries, K].
std::vector<std::size_t> knn(std::span<const Vec3> points, std::span<const Vec3> queries, std::size_t k);

struct InterpolationWeights {
  std::size_t per_point = 0;         // min(3, |children|)
  std::vector<std::size_t> indices;  // [parents, per_point]
  std::vector<double> weights;       // [parents, per_point], rows sum to 1
};

InterpolationWeights interpolation_weights(std::span<const Vec3> children,
                                           std::span<const Vec3> parents);

struct SampleMap {
  std::vector<std::size_t> selected;   // indices into the parent set
  std::vector<std::size_t> neighbors;  // [selected, K] indices into the parent set
  std::size_t rate = 1;
  std::size_t k = 1;
};

SampleMap build_sample_map(std::span<const Vec3> coords, std::size_t rate, std::size_t k);

template <typename T>
struct DownsampleResult {
  std::vector<Vec3> coords;
  Tensor<T> features;  // [L/d, 2H]
  SampleMap map;
};

template <typename T>
struct DownsampleLayer {
  Mlp<T> pointnet;  // H + 3 -> 2H
  std::size_t rate = 4;
  std::size_t neighbors = 16;

  static DownsampleLayer init(const Initializer& init, const std::string& name, std::size_t width,
                              std::size_t rate, std::size_t neighbors) {
    if (rate == 0 || neighbors == 0) throw ConfigError("downsample: rate and K must be positive");
    return {Mlp<T>::init(init, name, {width + 3, 2 * width}, true), rate, neighbors};
  }

  DownsampleResult<T> operator()(std::span<const Vec3> coords, const Tensor<T>& features) const {
    const std::size_t L = coords.size();
    if (features.rows() != L) throw DimensionError("downsample: coordinate/feature count mismatch");
    DownsampleResult<T> out;
    out.map = build_sample_map(coords, rate, neighbors);
    const std::size_t m = out.map.selected.size();
    std::vector<T> rel;
    rel.reserve(m * neighbors * 3);
    for (std::size_t c = 0; c < m; ++c) {
      const Vec3& center = coords[out.map.selected[c]];
      out.coords.push_back(center);
      for (std::size_t k = 0; k < neighbors; ++k) {
        const Vec3& p = coords[out.map.neighbors[c * neighbors + k]];
        for (int a = 0; a < 3; ++a) rel.push_back(static_cast<T>(p[a] - center[a]));
      }
    }
    const auto grouped = index_rows(features, out.map.neighbors);
    const auto offsets = Tensor<T>::from_data({m * neighbors, 3}, std::move(rel));
    out.features = group_max_rows(pointnet(concat_cols<T>({grouped, offsets})), neighbors);
    return out;
  }

  void collect(ParameterList<T>& out, const std::string& name) const { pointnet.collect(out, name); }

  std::size_t flops(std::size_t points) const {
    return pointnet.flops((points / rate) * neighbors);
  }
};

template <typename T>
struct UpsampleLayer {
  Mlp<T> align;  // 2H -> H
  Mlp<T> skip;   // H -> H

  static UpsampleLayer init(const Initializer& init, const std::string& name, std::size_t width) {
    return {Mlp<T>::init(init, name + ".align", {2 * width, width}, true),
            Mlp<T>::init(init, name + ".skip", {width, width}, true)};
  }

  Tensor<T> operator()(std::span<const Vec3> child_coords, const Tensor<T>& child_features,
                       std::span<const Vec3> parent_coords, const Tensor<T>& parent_skip) const {
    if (child_coords.empty()) throw ContractError("upsample: empty child set");
    if (child_features.rows() != child_coords.size() || parent_skip.rows() != parent_coords.size()) {
      throw DimensionError("upsample: coordinate/feature count mismatch");
    }
    const auto iw = interpolation_weights(child_coords, parent_coords);
    std::vector<T> w(iw.weights.begin(), iw.weights.end());
    const auto aligned = align(child_features);
    return add(skip(parent_skip), weighted_rows(aligned, iw.indices, std::move(w), iw.per_point));
  }

  void collect(ParameterList<T>& out, const std::string& name) const {
    align.collect(out, name + ".align");
    skip.collect(out, name + ".skip");
  }

  std::size_t flops(std::size_t parents, std::size_t children) const {
    return align.flops(children) + skip.flops(parents);
  }
};

}  // namespace pcssm
