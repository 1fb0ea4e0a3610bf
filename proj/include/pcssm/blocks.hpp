#pragma once

// Mamba shell around GS6, the chained and parallel bidirectional wrappers,
// and the hexa-orientation block (serialize -> bidirectional scan per axis ->
// merge).

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pcssm/serialization.hpp"
#include "pcssm/ssm.hpp"

namespace pcssm {

enum class Structure { chained, parallel };

std::string_view structure_name(Structure s);
std::optional<Structure> parse_structure(std::string_view name);

template <typename T>
struct MambaBlockParams {
  Tensor<T> norm_gain;   // [D]
  Linear<T> in_proj;     // D -> 2E (value | gate), no bias
  GS6Params<T> ssm;      // width E
  Linear<T> out_proj;    // E -> D, no bias

  std::size_t width() const { return in_proj.in_features(); }
  std::size_t inner() const { return out_proj.in_features(); }

  static MambaBlockParams init(const Initializer& init, const std::string& name, std::size_t width,
                               std::size_t state, std::size_t group, std::size_t expansion = 2) {
    const std::size_t inner = expansion * width;
    MambaBlockParams p;
    p.norm_gain = Tensor<T>::parameter({width}, std::vector<T>(width, T(1)));
    p.in_proj = Linear<T>::init(init, name + ".in_proj", width, 2 * inner, false);
    p.ssm = GS6Params<T>::init(init, name + ".ssm", {inner, state, group});
    p.out_proj = Linear<T>::init(init, name + ".out_proj", inner, width, false);
    return p;
  }

  void collect(ParameterList<T>& out, const std::string& name) const {
    out.push_back({name + ".norm", norm_gain});
    in_proj.collect(out, name + ".in_proj");
    ssm.collect(out, name + ".ssm");
    out_proj.collect(out, name + ".out_proj");
  }

  std::size_t flops(std::size_t length) const {
    const std::size_t E = inner(), N = ssm.dims.state, G = ssm.dims.groups();
    const std::size_t projections = 2 * length * E * (2 * N + G);
    const std::size_t scan = 7 * length * E * N;
    return in_proj.flops(length) + projections + scan + out_proj.flops(length);
  }
};

// pre-norm -> split value/gate -> GS6(value) * silu(gate) -> out_proj (+ input)
template <typename T>
Tensor<T> mamba_unidirectional(const Tensor<T>& seq, const MambaBlockParams<T>& p,
                               ScanOptions scan = {}, bool residual = true) {
  if (seq.rows() == 0) throw ContractError("mamba_unidirectional: empty sequence");
  const std::size_t E = p.inner();
  const auto projected = p.in_proj(rms_norm(seq, p.norm_gain));
  const auto value = slice_cols(projected, 0, E);
  const auto gate = slice_cols(projected, E, 2 * E);
  const auto mixed = mul(gs6_forward(value, p.ssm, scan), silu(gate));
  const auto out = p.out_proj(mixed);
  return residual ? add(seq, out) : out;
}

struct ChainOptions {
  bool block_residual = false;  // add the block input to the result
  bool forward_skip = false;    // add the forward pass output to the result
  ScanOptions scan;
};

// The backward scan consumes the forward scan's output.
template <typename T>
Tensor<T> chained_bidirectional(const Tensor<T>& seq, const MambaBlockParams<T>& fwd,
                                const MambaBlockParams<T>& bwd, ChainOptions opts = {}) {
  const auto forward = mamba_unidirectional(seq, fwd, opts.scan);
  auto y = flip_rows(mamba_unidirectional(flip_rows(forward), bwd, opts.scan));
  if (opts.forward_skip) y = add(y, forward);
  if (opts.block_residual) y = add(y, seq);
  return y;
}

// Two independent scans over the sequence and its reverse, summed on top of
// a single residual.
template <typename T>
Tensor<T> parallel_bidirectional(const Tensor<T>& seq, const MambaBlockParams<T>& fwd,
                                 const MambaBlockParams<T>& bwd, ScanOptions scan = {}) {
  const auto forward = mamba_unidirectional(seq, fwd, scan, false);
  const auto backward = flip_rows(mamba_unidirectional(flip_rows(seq), bwd, scan, false));
  return add(add(seq, forward), backward);
}

struct BlockConfig {
  std::size_t width = 32;
  std::size_t state = 8;
  std::size_t group = 2;
  std::size_t expansion = 2;
  std::vector<Axis> axes{Axis::z, Axis::y, Axis::x};
  Structure structure = Structure::chained;
  bool residual = false;
  bool forward_skip = false;
  bool prompt = true;
  bool position = true;
  bool merge_activation = true;
  ScanOptions scan;

  void validate() const {
    if (axes.empty()) throw ConfigError("block: empty axis set");
    GS6Dims{expansion * width, state, group}.validate();
  }
};

template <typename T>
struct AxisBranch {
  Axis axis = Axis::z;
  Tensor<T> prompt;      // [D], undefined when prompts are off
  Tensor<T> prompt_pos;  // [D], undefined when prompts or embeddings are off
  MambaBlockParams<T> forward;
  MambaBlockParams<T> backward;
};

template <typename T>
struct HexaBlockParams {
  std::optional<PositionEncoder<T>> position;
  std::vector<AxisBranch<T>> branches;
  MergeReducer<T> reducer;

  static HexaBlockParams init(const Initializer& init, const std::string& name, const BlockConfig& cfg) {
    cfg.validate();
    HexaBlockParams p;
    const std::size_t D = cfg.width;
    if (cfg.position) p.position = PositionEncoder<T>::init(init, name + ".pos", D);
    for (Axis axis : cfg.axes) {
      const std::string an = name + "." + std::string(axis_name(axis));
      AxisBranch<T> b;
      b.axis = axis;
      if (cfg.prompt) {
        b.prompt = Tensor<T>::parameter({D}, init.uniform<T>(an + ".prompt", D, 0.1));
        if (cfg.position) {
          b.prompt_pos = Tensor<T>::parameter({1, D}, init.uniform<T>(an + ".prompt_pos", D, 0.1));
        }
      }
      b.forward = MambaBlockParams<T>::init(init, an + ".fwd", D, cfg.state, cfg.group, cfg.expansion);
      b.backward = MambaBlockParams<T>::init(init, an + ".bwd", D, cfg.state, cfg.group, cfg.expansion);
      p.branches.push_back(std::move(b));
    }
    p.reducer = MergeReducer<T>::init(init, name + ".merge", cfg.axes.size(), D, cfg.merge_activation);
    return p;
  }

  void collect(ParameterList<T>& out, const std::string& name) const {
    if (position) position->collect(out, name + ".pos");
    for (const auto& b : branches) {
      const std::string an = name + "." + std::string(axis_name(b.axis));
      if (b.prompt.defined()) out.push_back({an + ".prompt", b.prompt});
      if (b.prompt_pos.defined()) out.push_back({an + ".prompt_pos", b.prompt_pos});
      b.forward.collect(out, an + ".fwd");
      b.backward.collect(out, an + ".bwd");
    }
    reducer.collect(out, name + ".merge");
  }

  std::size_t flops(std::size_t length) const {
    std::size_t f = position ? position->mlp.flops(length) : 0;
    const std::size_t seq_len = length + (branches.empty() || !branches[0].prompt.defined() ? 0 : 1);
    for (const auto& b : branches) f += b.forward.flops(seq_len) + b.backward.flops(seq_len);
    return f + reducer.linear.flops(length);
  }
};

template <typename T>
Tensor<T> bidirectional(const Tensor<T>& seq, const AxisBranch<T>& branch, const BlockConfig& cfg) {
  if (cfg.structure == Structure::parallel) {
    auto y = parallel_bidirectional(seq, branch.forward, branch.backward, cfg.scan);
    return cfg.residual ? add(y, seq) : y;
  }
  return chained_bidirectional(seq, branch.forward, branch.backward,
                               ChainOptions{cfg.residual, cfg.forward_skip, cfg.scan});
}

// Output row i belongs to input point i; width is preserved.
template <typename T>
Tensor<T> hexa_orientation_block(std::span<const Vec3> coords, const Tensor<T>& features,
                                 const HexaBlockParams<T>& params, const BlockConfig& cfg) {
  if (features.cols() != cfg.width) {
    throw DimensionError("hexa_orientation_block: feature width " + std::to_string(features.cols()) +
                         " != " + std::to_string(cfg.width));
  }
  const auto sequences = expand(coords, features, cfg.axes);
  std::vector<Tensor<T>> processed;
  std::vector<AxisOrder> orders;
  const PositionEncoder<T>* encoder = params.position ? &*params.position : nullptr;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const auto& s = sequences[i];
    const auto& branch = params.branches.at(i);
    const auto seq = attach_prompt_and_positions(s.features, branch.prompt, branch.prompt_pos,
                                                 encoder, s.coords);
    processed.push_back(bidirectional(seq, branch, cfg));
    orders.push_back(s.order);
  }
  return merge(processed, orders, params.reducer, cfg.prompt);
}

}  // namespace pcssm
