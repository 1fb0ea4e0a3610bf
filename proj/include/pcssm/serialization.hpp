#pragma once

// Turns an unordered point set into causal sequences and back.
//
// Each axis ordering sorts the points by one coordinate (ties broken by the
// full coordinate tuple, then by original index). A sequence gets an optional
// learnable prompt row in front and coordinate embeddings added to its
// points; after processing, sequences are unsorted, concatenated channel-wise
// and reduced back to the input width.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pcssm/layers.hpp"
#include "pcssm/point_cloud.hpp"

namespace pcssm {

// `none` keeps the input order (the unsorted ablation level).
enum class Axis { z, y, x, none };

std::string_view axis_name(Axis axis);
std::optional<Axis> parse_axis(std::string_view name);

// Parses "XYZ", "zx", "none", ... into canonical Z, Y, X order.
std::vector<Axis> parse_axes(std::string_view spec);
std::string axes_label(const std::vector<Axis>& axes);

// The seven non-empty subsets of {Z, Y, X} in a fixed order.
std::vector<std::vector<Axis>> all_axis_subsets();

struct AxisOrder {
  Axis axis = Axis::none;
  std::vector<std::size_t> perm;     // sorted position -> original index
  std::vector<std::size_t> inverse;  // original index -> sorted position
};

std::vector<std::size_t> axis_permutation(std::span<const Vec3> coords, Axis axis);
AxisOrder make_axis_order(std::span<const Vec3> coords, Axis axis);
bool is_permutation(std::span<const std::size_t> perm, std::size_t n);

template <typename T>
struct SerializedSequence {
  AxisOrder order;
  Tensor<T> features;        // [L, D] rows in sorted order
  std::vector<Vec3> coords;  // coordinates in sorted order
};

template <typename T>
using SerializedSet = std::vector<SerializedSequence<T>>;

template <typename T>
SerializedSet<T> expand(std::span<const Vec3> coords, const Tensor<T>& features,
                        const std::vector<Axis>& axes) {
  if (axes.empty()) throw ConfigError("expand: empty axis set");
  if (features.rows() != coords.size()) {
    throw DimensionError("expand: " + std::to_string(coords.size()) + " coordinates for " +
                         std::to_string(features.rows()) + " feature rows");
  }
  SerializedSet<T> out;
  for (Axis axis : axes) {
    SerializedSequence<T> s;
    s.order = make_axis_order(coords, axis);
    s.features = gather_rows(features, std::span<const std::size_t>(s.order.perm));
    s.coords.reserve(coords.size());
    for (std::size_t p : s.order.perm) s.coords.push_back(coords[p]);
    out.push_back(std::move(s));
  }
  return out;
}

template <typename T>
Tensor<T> coords_tensor(std::span<const Vec3> coords) {
  std::vector<T> data;
  data.reserve(coords.size() * 3);
  for (const auto& c : coords) {
    for (double v : c) data.push_back(static_cast<T>(v));
  }
  return Tensor<T>::from_data({coords.size(), 3}, std::move(data));
}

// Coordinate embedding: 3 -> D -> D perceptron.
template <typename T>
struct PositionEncoder {
  Mlp<T> mlp;

  static PositionEncoder init(const Initializer& init, const std::string& name, std::size_t width) {
    return {Mlp<T>::init(init, name, {3, width, width})};
  }

  Tensor<T> operator()(std::span<const Vec3> coords) const { return mlp(coords_tensor<T>(coords)); }

  void collect(ParameterList<T>& out, const std::string& name) const { mlp.collect(out, name); }
};

// Row 0 is prompt (+ its position embedding), row j is point j-1 plus the
// embedding of its coordinate. An undefined prompt drops row 0; a null
// encoder skips the coordinate embeddings.
template <typename T>
Tensor<T> attach_prompt_and_positions(const Tensor<T>& sequence, const Tensor<T>& prompt,
                                      const Tensor<T>& prompt_pos, const PositionEncoder<T>* encoder,
                                      std::span<const Vec3> sorted_coords) {
  const std::size_t width = sequence.cols();
  Tensor<T> body = sequence;
  if (encoder && sequence.rows() > 0) {
    if (sorted_coords.size() != sequence.rows()) {
      throw DimensionError("attach_prompt_and_positions: coordinate count != sequence length");
    }
    body = add(sequence, (*encoder)(sorted_coords));
  }
  if (!prompt.defined()) return body;
  if (prompt.size() != width) throw DimensionError("attach_prompt_and_positions: prompt width");
  Tensor<T> head = reshape(prompt, {1, width});
  if (prompt_pos.defined()) head = add(head, prompt_pos);
  if (sequence.rows() == 0) return head;
  return concat_rows<T>({head, body});
}

// Gamma: k*D -> D linear map, optionally followed by SiLU.
template <typename T>
struct MergeReducer {
  Linear<T> linear;
  bool activation = true;

  static MergeReducer init(const Initializer& init, const std::string& name, std::size_t sequences,
                           std::size_t width, bool activation = true) {
    return {Linear<T>::init(init, name, sequences * width, width), activation};
  }

  // Averages the k channel blocks; no activation.
  static MergeReducer block_mean(std::size_t sequences, std::size_t width) {
    std::vector<T> w(sequences * width * width, T(0));
    for (std::size_t s = 0; s < sequences; ++s) {
      for (std::size_t c = 0; c < width; ++c) {
        w[(s * width + c) * width + c] = T(1) / static_cast<T>(sequences);
      }
    }
    MergeReducer r;
    r.linear.weight = Tensor<T>::parameter({sequences * width, width}, std::move(w));
    r.linear.bias = Tensor<T>::parameter({width}, std::vector<T>(width, T(0)));
    r.activation = false;
    return r;
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    auto y = linear(x);
    return activation ? silu(y) : y;
  }

  void collect(ParameterList<T>& out, const std::string& name) const { linear.collect(out, name); }
};

template <typename T>
Tensor<T> merge(const std::vector<Tensor<T>>& processed, const std::vector<AxisOrder>& orders,
                const MergeReducer<T>& reducer, bool has_prompt) {
  if (processed.empty() || processed.size() != orders.size()) {
    throw ContractError("merge: need one axis order per processed sequence");
  }
  const std::size_t offset = has_prompt ? 1 : 0;
  const std::size_t length = orders[0].perm.size();
  std::vector<Tensor<T>> restored;
  for (std::size_t i = 0; i < processed.size(); ++i) {
    if (processed[i].rows() != length + offset || orders[i].perm.size() != length) {
      throw ContractError("merge: sequence lengths differ across axes");
    }
    auto body = has_prompt ? slice_rows(processed[i], 1, length + 1) : processed[i];
    restored.push_back(scatter_rows(body, std::span<const std::size_t>(orders[i].perm)));
  }
  const auto merged = restored.size() == 1 ? restored[0] : concat_cols(restored);
  if (merged.cols() != reducer.linear.in_features()) {
    throw DimensionError("merge: reducer expects " + std::to_string(reducer.linear.in_features()) +
                         " channels, got " + std::to_string(merged.cols()));
  }
  return reducer(merged);
}

// Space-filling-curve baseline.
enum class CurveVariant { hilbert, trans_hilbert };

struct CurveSerialization {
  std::vector<std::size_t> perm;
  unsigned order = 1;
  std::optional<std::string> warning;
};

// Hilbert index of a cell in a 2^order grid per axis, 3 * order bits.
std::uint64_t hilbert_index(std::array<std::uint32_t, 3> cell, unsigned order);

CurveSerialization hilbert_serialize(std::span<const Vec3> coords, double grid_size,
                                     CurveVariant variant);

// Mean |rank(p) - rank(nearest neighbour of p)| over all points.
double locality_score(std::span<const Vec3> coords, std::span<const std::size_t> perm);

}  // namespace pcssm
