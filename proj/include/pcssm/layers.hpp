#pragma once

// Parameter bookkeeping and the small dense layers shared by every module.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "pcssm/ops.hpp"

namespace pcssm {

template <typename T>
struct NamedParameter {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
using ParameterList = std::vector<NamedParameter<T>>;

template <typename T>
std::size_t count_scalars(const ParameterList<T>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.size();
  return n;
}

template <typename T>
void zero_grads(ParameterList<T>& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

// Seeds every parameter from (seed, name), so a parameter's initial values
// do not depend on which other parameters exist in the model.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::mt19937_64 stream(std::string_view name) const {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : name) {
      h ^= ch;
      h *= 1099511628211ULL;
    }
    return std::mt19937_64(splitmix(h ^ splitmix(seed_)));
  }

  template <typename T>
  std::vector<T> uniform(std::string_view name, std::size_t n, double bound) const {
    auto rng = stream(name);
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<T> out(n);
    for (auto& v : out) v = static_cast<T>(dist(rng));
    return out;
  }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }

  std::uint64_t seed_;
};

template <typename T>
struct Linear {
  Tensor<T> weight;  // [in, out]
  Tensor<T> bias;    // [out], undefined when the layer has no bias

  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }

  static Linear init(const Initializer& init, const std::string& name, std::size_t in,
                     std::size_t out, bool with_bias = true) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Linear l;
    l.weight = Tensor<T>::parameter({in, out}, init.uniform<T>(name + ".weight", in * out, bound));
    if (with_bias) l.bias = Tensor<T>::parameter({out}, init.uniform<T>(name + ".bias", out, bound));
    return l;
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    auto y = matmul(x, weight);
    return bias.defined() ? add(y, bias) : y;
  }

  void collect(ParameterList<T>& out, const std::string& name) const {
    out.push_back({name + ".weight", weight});
    if (bias.defined()) out.push_back({name + ".bias", bias});
  }

  std::size_t flops(std::size_t rows) const { return 2 * rows * in_features() * out_features(); }
};

// Stack of linear layers with SiLU between them; `final_activation` also
// applies it after the last layer.
template <typename T>
struct Mlp {
  std::vector<Linear<T>> layers;
  bool final_activation = false;

  static Mlp init(const Initializer& init, const std::string& name,
                  const std::vector<std::size_t>& widths, bool final_activation = false) {
    if (widths.size() < 2) throw ConfigError("Mlp needs at least an input and an output width");
    Mlp m;
    m.final_activation = final_activation;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      m.layers.push_back(
          Linear<T>::init(init, name + "." + std::to_string(i), widths[i], widths[i + 1]));
    }
    return m;
  }

  Tensor<T> operator()(Tensor<T> x) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      x = layers[i](x);
      if (i + 1 < layers.size() || final_activation) x = silu(x);
    }
    return x;
  }

  void collect(ParameterList<T>& out, const std::string& name) const {
    for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(out, name + "." + std::to_string(i));
  }

  std::size_t flops(std::size_t rows) const {
    std::size_t f = 0;
    for (const auto& l : layers) f += l.flops(rows);
    return f;
  }
};

// Overwrites every scalar of the listed parameters with zero.
template <typename T>
void zero_fill(Tensor<T>& t) {
  for (auto& v : t.mutable_data()) v = T(0);
}

}  // namespace pcssm
