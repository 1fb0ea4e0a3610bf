#pragma once

// Differentiable op vocabulary. Tensors are viewed as rows x cols where cols
// is the last extent; that covers every layer in the library.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "pcssm/tensor.hpp"

namespace pcssm {

enum class Elementwise { add, mul, exp, softplus, silu, neg, reciprocal };

namespace detail {

template <typename T>
void require_finite(const Tensor<T>& t, const char* op) {
  for (T v : t.data()) {
    if (!std::isfinite(v)) throw DomainError(std::string(op) + ": non-finite operand");
  }
}

// How `b` combines with `a` in a binary op.
enum class Broadcast { same, row, scalar };

template <typename T>
Broadcast broadcast_kind(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::same;
  if (b.size() == 1) return Broadcast::scalar;
  if (b.size() == a.cols() && (b.rank() == 1 || b.rows() == 1)) return Broadcast::row;
  throw DimensionError(std::string(op) + ": cannot broadcast " + to_string(b.shape()) + " onto " +
                       to_string(a.shape()));
}

inline std::size_t bindex(Broadcast kind, std::size_t i, std::size_t cols) {
  switch (kind) {
    case Broadcast::same: return i;
    case Broadcast::row: return i % cols;
    case Broadcast::scalar: return 0;
  }
  return i;
}

template <typename T>
T stable_softplus(T x) {
  // log(1 + e^x); for large x the e^{-x} tail keeps it from overflowing.
  if (x > T(20)) return x + std::log1p(std::exp(-x));
  if (x < T(-20)) return std::exp(x);
  return std::log1p(std::exp(x));
}

template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T, typename Fwd, typename Deriv>
Tensor<T> unary(const Tensor<T>& a, Fwd fwd, Deriv deriv) {
  std::vector<T> out(a.size());
  const auto in = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  auto an = a.node();
  return make_result<T>(a.shape(), std::move(out), {a}, [an, deriv](const Node<T>& self) {
    auto* ga = grad_sink(an);
    if (!ga) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      (*ga)[i] += self.grad[i] * deriv(an->data[i], self.data[i]);
    }
  });
}

inline void check_permutation(std::span<const std::size_t> perm, std::size_t n, const char* op) {
  if (perm.size() != n) {
    throw IndexError(std::string(op) + ": permutation of length " + std::to_string(perm.size()) +
                     " for " + std::to_string(n) + " rows");
  }
  std::vector<char> hit(n, 0);
  for (std::size_t p : perm) {
    if (p >= n || hit[p]) throw IndexError(std::string(op) + ": index list is not a permutation");
    hit[p] = 1;
  }
}

}  // namespace detail

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  detail::require_finite(a, "matmul");
  detail::require_finite(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(m * n, T(0));
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    T* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = A[i * k + p];
      const T* brow = B.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  auto an = a.node();
  auto bn = b.node();
  return detail::make_result<T>({m, n}, std::move(out), {a, b},
                                [an, bn, m, k, n](const detail::Node<T>& self) {
    const auto& g = self.grad;
    if (auto* ga = detail::grad_sink(an)) {
      // dA = G * B^T
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          T acc = T(0);
          const T* brow = bn->data.data() + p * n;
          const T* grow = g.data() + i * n;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          (*ga)[i * k + p] += acc;
        }
      }
    }
    if (auto* gb = detail::grad_sink(bn)) {
      // dB = A^T * G
      for (std::size_t i = 0; i < m; ++i) {
        const T* grow = g.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const T av = an->data[i * k + p];
          T* dst = gb->data() + p * n;
          for (std::size_t j = 0; j < n; ++j) dst[j] += av * grow[j];
        }
      }
    }
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  const auto kind = detail::broadcast_kind(a, b, "add");
  const std::size_t cols = a.cols();
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[detail::bindex(kind, i, cols)];
  auto an = a.node();
  auto bn = b.node();
  return detail::make_result<T>(a.shape(), std::move(out), {a, b},
                                [an, bn, kind, cols](const detail::Node<T>& self) {
    if (auto* ga = detail::grad_sink(an)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*ga)[i] += self.grad[i];
    }
    if (auto* gb = detail::grad_sink(bn)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        (*gb)[detail::bindex(kind, i, cols)] += self.grad[i];
      }
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  const auto kind = detail::broadcast_kind(a, b, "mul");
  const std::size_t cols = a.cols();
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[detail::bindex(kind, i, cols)];
  auto an = a.node();
  auto bn = b.node();
  return detail::make_result<T>(a.shape(), std::move(out), {a, b},
                                [an, bn, kind, cols](const detail::Node<T>& self) {
    if (auto* ga = detail::grad_sink(an)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        (*ga)[i] += self.grad[i] * bn->data[detail::bindex(kind, i, cols)];
      }
    }
    if (auto* gb = detail::grad_sink(bn)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        (*gb)[detail::bindex(kind, i, cols)] += self.grad[i] * an->data[i];
      }
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  return detail::unary(a, [factor](T x) { return factor * x; },
                       [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
  return scale(a, T(-1));
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return add(a, neg(b));
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
  return detail::unary(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& a) {
  return detail::unary(a, [](T x) { return detail::stable_softplus(x); },
                       [](T x, T) { return detail::sigmoid(x); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return detail::unary(a, [](T x) { return detail::sigmoid(x); },
                       [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> silu(const Tensor<T>& a) {
  return detail::unary(a, [](T x) { return x * detail::sigmoid(x); },
                       [](T x, T) {
                         const T s = detail::sigmoid(x);
                         return s * (T(1) + x * (T(1) - s));
                       });
}

template <typename T>
Tensor<T> reciprocal(const Tensor<T>& a) {
  for (T v : a.data()) {
    if (v == T(0)) throw DomainError("reciprocal: zero operand");
  }
  return detail::unary(a, [](T x) { return T(1) / x; }, [](T, T y) { return -y * y; });
}

template <typename T>
Tensor<T> elementwise(Elementwise kind, const Tensor<T>& a) {
  switch (kind) {
    case Elementwise::exp: return exp(a);
    case Elementwise::softplus: return softplus(a);
    case Elementwise::silu: return silu(a);
    case Elementwise::neg: return neg(a);
    case Elementwise::reciprocal: return reciprocal(a);
    default: throw ContractError("elementwise: binary op called with one operand");
  }
}

template <typename T>
Tensor<T> elementwise(Elementwise kind, const Tensor<T>& a, const Tensor<T>& b) {
  switch (kind) {
    case Elementwise::add: return add(a, b);
    case Elementwise::mul: return mul(a, b);
    default: throw ContractError("elementwise: unary op called with two operands");
  }
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T total = T(0);
  for (T v : a.data()) total += v;
  auto an = a.node();
  return detail::make_result<T>({1}, {total}, {a}, [an](const detail::Node<T>& self) {
    if (auto* ga = detail::grad_sink(an)) {
      for (auto& g : *ga) g += self.grad[0];
    }
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.size()));
}

// Column means over rows: [R, C] -> [1, C].
template <typename T>
Tensor<T> mean_rows(const Tensor<T>& a) {
  const std::size_t r = a.rows(), c = a.cols();
  if (r == 0) throw ContractError("mean_rows: empty tensor");
  std::vector<T> out(c, T(0));
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j] += a[i * c + j];
  }
  for (auto& v : out) v /= static_cast<T>(r);
  auto an = a.node();
  return detail::make_result<T>({1, c}, std::move(out), {a}, [an, r, c](const detail::Node<T>& self) {
    if (auto* ga = detail::grad_sink(an)) {
      const T inv = T(1) / static_cast<T>(r);
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) (*ga)[i * c + j] += self.grad[j] * inv;
      }
    }
  });
}

// Max over consecutive groups of `group` rows: [m*group, C] -> [m, C].
template <typename T>
Tensor<T> group_max_rows(const Tensor<T>& a, std::size_t group) {
  const std::size_t c = a.cols();
  if (group == 0 || a.rows() % group != 0) {
    throw DimensionError("group_max_rows: " + std::to_string(a.rows()) + " rows not divisible by " +
                         std::to_string(group));
  }
  const std::size_t m = a.rows() / group;
  std::vector<T> out(m * c);
  std::vector<std::size_t> argmax(m * c);
  for (std::size_t g = 0; g < m; ++g) {
    for (std::size_t j = 0; j < c; ++j) {
      std::size_t best = g * group;
      for (std::size_t r = g * group + 1; r < (g + 1) * group; ++r) {
        if (a[r * c + j] > a[best * c + j]) best = r;
      }
      argmax[g * c + j] = best * c + j;
      out[g * c + j] = a[best * c + j];
    }
  }
  auto an = a.node();
  return detail::make_result<T>({m, c}, std::move(out), {a},
                                [an, argmax = std::move(argmax)](const detail::Node<T>& self) {
    if (auto* ga = detail::grad_sink(an)) {
      for (std::size_t i = 0; i < argmax.size(); ++i) (*ga)[argmax[i]] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t r = parts[0].rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != r) throw DimensionError("concat_cols: row counts differ");
    total += p.cols();
  }
  std::vector<T> out(r * total);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t c = p.cols();
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) out[i * total + offset + j] = p[i * c + j];
    }
    offset += c;
  }
  std::vector<typename Tensor<T>::NodePtr> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  return detail::make_result<T>({r, total}, std::move(out), parts,
                                [nodes, r, total](const detail::Node<T>& self) {
    std::size_t off = 0;
    for (const auto& n : nodes) {
      const std::size_t c = n->shape.back();
      if (auto* g = detail::grad_sink(n)) {
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < c; ++j) (*g)[i * c + j] += self.grad[i * total + off + j];
        }
      }
      off += c;
    }
  });
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const std::size_t c = parts[0].cols();
  std::size_t r = 0;
  for (const auto& p : parts) {
    if (p.cols() != c) throw DimensionError("concat_rows: column counts differ");
    r += p.rows();
  }
  std::vector<T> out;
  out.reserve(r * c);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  std::vector<typename Tensor<T>::NodePtr> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  return detail::make_result<T>({r, c}, std::move(out), parts, [nodes](const detail::Node<T>& self) {
    std::size_t off = 0;
    for (const auto& n : nodes) {
      if (auto* g = detail::grad_sink(n)) {
        for (std::size_t i = 0; i < n->data.size(); ++i) (*g)[i] += self.grad[off + i];
      }
      off += n->data.size();
    }
  });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t end) {
  const std::size_t r = a.rows(), c = a.cols();
  if (begin > end || end > c) throw DimensionError("slice_cols: range out of bounds");
  const std::size_t w = end - begin;
  std::vector<T> out(r * w);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = a[i * c + begin + j];
  }
  auto an = a.node();
  return detail::make_result<T>({r, w}, std::move(out), {a},
                                [an, r, c, w, begin](const detail::Node<T>& self) {
    if (auto* ga = detail::grad_sink(an)) {
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < w; ++j) (*ga)[i * c + begin + j] += self.grad[i * w + j];
      }
    }
  });
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t begin, std::size_t end) {
  const std::size_t c = a.cols();
  if (begin > end || end > a.rows()) throw DimensionError("slice_rows: range out of bounds");
  std::vector<T> out(a.data().begin() + begin * c, a.data().begin() + end * c);
  auto an = a.node();
  return detail::make_result<T>({end - begin, c}, std::move(out), {a},
                                [an, begin, c](const detail::Node<T>& self) {
    if (auto* ga = detail::grad_sink(an)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*ga)[begin * c + i] += self.grad[i];
    }
  });
}

// Arbitrary row gather (repetition allowed): out[i] = a[indices[i]].
template <typename T>
Tensor<T> index_rows(const Tensor<T>& a, std::vector<std::size_t> indices) {
  const std::size_t c = a.cols(), r = a.rows();
  std::vector<T> out(indices.size() * c);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= r) throw IndexError("index_rows: index " + std::to_string(indices[i]) +
                                          " out of range for " + std::to_string(r) + " rows");
    std::copy_n(a.data().begin() + indices[i] * c, c, out.begin() + i * c);
  }
  auto an = a.node();
  const std::size_t n = indices.size();
  return detail::make_result<T>({n, c}, std::move(out), {a},
                                [an, c, indices = std::move(indices)](const detail::Node<T>& self) {
    if (auto* ga = detail::grad_sink(an)) {
      for (std::size_t i = 0; i < indices.size(); ++i) {
        for (std::size_t j = 0; j < c; ++j) (*ga)[indices[i] * c + j] += self.grad[i * c + j];
      }
    }
  });
}

// Row i of the result is row perm[i] of `a`.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& a, std::span<const std::size_t> perm) {
  detail::check_permutation(perm, a.rows(), "gather_rows");
  return index_rows(a, std::vector<std::size_t>(perm.begin(), perm.end()));
}

// Inverse of gather_rows: row perm[i] of the result is row i of `a`.
template <typename T>
Tensor<T> scatter_rows(const Tensor<T>& a, std::span<const std::size_t> perm) {
  detail::check_permutation(perm, a.rows(), "scatter_rows");
  std::vector<std::size_t> inverse(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inverse[perm[i]] = i;
  return index_rows(a, std::move(inverse));
}

template <typename T>
Tensor<T> flip_rows(const Tensor<T>& a) {
  std::vector<std::size_t> rev(a.rows());
  for (std::size_t i = 0; i < rev.size(); ++i) rev[i] = rev.size() - 1 - i;
  return index_rows(a, std::move(rev));
}

// out[i] = sum_k weights[i*k_per+k] * a[indices[i*k_per+k]]
template <typename T>
Tensor<T> weighted_rows(const Tensor<T>& a, std::vector<std::size_t> indices,
                        std::vector<T> weights, std::size_t per_row) {
  if (per_row == 0 || indices.size() != weights.size() || indices.size() % per_row != 0) {
    throw DimensionError("weighted_rows: index/weight lists inconsistent");
  }
  const std::size_t c = a.cols(), r = a.rows(), m = indices.size() / per_row;
  std::vector<T> out(m * c, T(0));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < per_row; ++k) {
      const std::size_t src = indices[i * per_row + k];
      if (src >= r) throw IndexError("weighted_rows: index out of range");
      const T w = weights[i * per_row + k];
      for (std::size_t j = 0; j < c; ++j) out[i * c + j] += w * a[src * c + j];
    }
  }
  auto an = a.node();
  return detail::make_result<T>(
      {m, c}, std::move(out), {a},
      [an, c, per_row, indices = std::move(indices), weights = std::move(weights)](
          const detail::Node<T>& self) {
        if (auto* ga = detail::grad_sink(an)) {
          const std::size_t m = indices.size() / per_row;
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t k = 0; k < per_row; ++k) {
              const std::size_t src = indices[i * per_row + k];
              const T w = weights[i * per_row + k];
              for (std::size_t j = 0; j < c; ++j) (*ga)[src * c + j] += w * self.grad[i * c + j];
            }
          }
        }
      });
}

// Per-row RMS normalization with a learned per-column gain.
template <typename T>
Tensor<T> rms_norm(const Tensor<T>& a, const Tensor<T>& gain, T eps = T(1e-5)) {
  const std::size_t r = a.rows(), c = a.cols();
  if (gain.size() != c) throw DimensionError("rms_norm: gain width mismatch");
  std::vector<T> out(r * c), inv_rms(r);
  for (std::size_t i = 0; i < r; ++i) {
    T ss = T(0);
    for (std::size_t j = 0; j < c; ++j) ss += a[i * c + j] * a[i * c + j];
    inv_rms[i] = T(1) / std::sqrt(ss / static_cast<T>(c) + eps);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a[i * c + j] * inv_rms[i] * gain[j];
  }
  auto an = a.node();
  auto gn = gain.node();
  return detail::make_result<T>(a.shape(), std::move(out), {a, gain},
                                [an, gn, r, c, inv_rms = std::move(inv_rms)](const detail::Node<T>& self) {
    auto* ga = detail::grad_sink(an);
    auto* gg = detail::grad_sink(gn);
    for (std::size_t i = 0; i < r; ++i) {
      const T s = inv_rms[i];
      const T* x = an->data.data() + i * c;
      const T* g = self.grad.data() + i * c;
      if (gg) {
        for (std::size_t j = 0; j < c; ++j) (*gg)[j] += g[j] * x[j] * s;
      }
      if (ga) {
        // y_j = x_j s w_j, ds/dx_k = -s^3 x_k / c
        T dot = T(0);
        for (std::size_t j = 0; j < c; ++j) dot += g[j] * gn->data[j] * x[j];
        const T coeff = dot * s * s * s / static_cast<T>(c);
        for (std::size_t j = 0; j < c; ++j) {
          (*ga)[i * c + j] += g[j] * gn->data[j] * s - coeff * x[j];
        }
      }
    }
  });
}

// Mean softmax cross-entropy of [R, C] logits against R class labels.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
  const std::size_t r = logits.rows(), c = logits.cols();
  if (labels.size() != r) throw DimensionError("cross_entropy: label count != rows");
  std::vector<T> probs(r * c);
  T total = T(0);
  for (std::size_t i = 0; i < r; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw IndexError("cross_entropy: label out of range");
    }
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, logits[i * c + j]);
    T z = T(0);
    for (std::size_t j = 0; j < c; ++j) {
      probs[i * c + j] = std::exp(logits[i * c + j] - mx);
      z += probs[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] /= z;
    total += -(logits[i * c + labels[i]] - mx - std::log(z));
  }
  total /= static_cast<T>(r);
  auto ln = logits.node();
  return detail::make_result<T>({1}, {total}, {logits},
                                [ln, r, c, labels, probs = std::move(probs)](const detail::Node<T>& self) {
    if (auto* gl = detail::grad_sink(ln)) {
      const T s = self.grad[0] / static_cast<T>(r);
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
          const T onehot = static_cast<int>(j) == labels[i] ? T(1) : T(0);
          (*gl)[i * c + j] += s * (probs[i * c + j] - onehot);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw DimensionError("reshape: " + to_string(a.shape()) + " -> " + to_string(shape));
  }
  auto an = a.node();
  return detail::make_result<T>(std::move(shape), a.to_vector(), {a}, [an](const detail::Node<T>& self) {
    if (auto* ga = detail::grad_sink(an)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*ga)[i] += self.grad[i];
    }
  });
}

}  // namespace pcssm
