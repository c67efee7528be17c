#pragma once

// Differentiable per-token blocks used both as synthetic teachers and as
// weight-tied surrogate blocks.
//
//   affine     y = W x + b
//   gated-mlp  y = x + W2 tanh(W1 x + b1) + b2
//
// With a depth-scale table enabled, the residual update u (W x + b - x for
// the affine family) is multiplied elementwise by the row belonging to the
// target layer: y = x + s_layer * u.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "depthflow/error.hpp"
#include "depthflow/linalg.hpp"
#include "depthflow/rng.hpp"

namespace depthflow {

enum class BlockFamily { affine, gated_mlp };

inline std::string_view family_name(BlockFamily f) {
  return f == BlockFamily::affine ? "affine" : "gated-mlp";
}

inline BlockFamily parse_family(std::string_view s) {
  if (s == "affine") return BlockFamily::affine;
  if (s == "gated-mlp" || s == "gated_mlp") return BlockFamily::gated_mlp;
  throw UsageError("unknown block family '" + std::string(s) + "'");
}

struct BlockParams {
  BlockFamily family = BlockFamily::affine;
  la::Matrix w1;  ///< affine: W (d x d); gated-mlp: W1 (h x d)
  la::Vector b1;  ///< affine: b (d);     gated-mlp: b1 (h)
  la::Matrix w2;  ///< gated-mlp only: W2 (d x h)
  la::Vector b2;  ///< gated-mlp only: b2 (d)
  la::Matrix depth_scale;  ///< empty, or one row per target layer 1..L

  static BlockParams affine(la::Matrix w, la::Vector b) {
    BlockParams p;
    p.family = BlockFamily::affine;
    p.w1 = std::move(w);
    p.b1 = std::move(b);
    p.validate();
    return p;
  }

  static BlockParams gated_mlp(la::Matrix w1, la::Vector b1, la::Matrix w2, la::Vector b2) {
    BlockParams p;
    p.family = BlockFamily::gated_mlp;
    p.w1 = std::move(w1);
    p.b1 = std::move(b1);
    p.w2 = std::move(w2);
    p.b2 = std::move(b2);
    p.validate();
    return p;
  }

  static BlockParams identity(std::size_t dim) {
    return affine(la::Matrix::identity(dim), la::Vector(dim, 0.0));
  }

  std::size_t dim() const noexcept { return w1.cols(); }
  std::size_t hidden() const noexcept { return family == BlockFamily::gated_mlp ? w1.rows() : 0; }
  bool has_depth_scale() const noexcept { return !depth_scale.empty(); }

  /// Adds a depth-scale table of ones for target layers 1..depth.
  void enable_depth_scale(std::size_t depth) { depth_scale = la::Matrix(depth, dim(), 1.0); }

  BlockParams zeros_like() const {
    BlockParams z;
    z.family = family;
    z.w1 = la::Matrix(w1.rows(), w1.cols());
    z.b1.assign(b1.size(), 0.0);
    z.w2 = la::Matrix(w2.rows(), w2.cols());
    z.b2.assign(b2.size(), 0.0);
    z.depth_scale = la::Matrix(depth_scale.rows(), depth_scale.cols());
    return z;
  }

  /// Visits every parameter array in a fixed order: w1, b1, w2, b2, depth_scale.
  template <class F>
  void for_each_array(F&& f) {
    f(w1.data());
    f(std::span<double>(b1));
    f(w2.data());
    f(std::span<double>(b2));
    f(depth_scale.data());
  }
  template <class F>
  void for_each_array(F&& f) const {
    f(w1.data());
    f(std::span<const double>(b1));
    f(w2.data());
    f(std::span<const double>(b2));
    f(depth_scale.data());
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_array([&](auto s) { n += s.size(); });
    return n;
  }

  void validate() const {
    const std::size_t d = dim();
    if (d == 0) throw UsageError("block: dimension must be >= 1");
    if (family == BlockFamily::affine) {
      if (w1.rows() != d || b1.size() != d) throw UsageError("affine block: W must be d x d, b length d");
      if (!w2.empty() || !b2.empty()) throw UsageError("affine block: unexpected second layer");
    } else {
      const std::size_t h = w1.rows();
      if (h < 1) throw UsageError("gated-mlp block: hidden width must be >= 1");
      if (b1.size() != h || w2.rows() != d || w2.cols() != h || b2.size() != d)
        throw UsageError("gated-mlp block: inconsistent shapes");
    }
    if (has_depth_scale() && depth_scale.cols() != d)
      throw UsageError("block: depth-scale width must equal dim");
    bool finite = true;
    for_each_array([&](auto s) {
      for (double x : s) finite = finite && std::isfinite(x);
    });
    if (!finite) throw DataError("block: non-finite parameter");
  }

  friend bool operator==(const BlockParams&, const BlockParams&) = default;
};

/// Intermediate values of one token's forward pass, kept for backprop.
struct TokenCache {
  la::Vector hidden;  // gated-mlp tanh activations
  la::Vector update;  // residual update before depth scaling
};

namespace detail {

inline std::span<const double> scale_row(const BlockParams& b, std::size_t target_layer) {
  if (!b.has_depth_scale()) return {};
  if (target_layer < 1 || target_layer > b.depth_scale.rows())
    throw UsageError("block: target layer " + std::to_string(target_layer) +
                     " outside depth-scale table");
  return b.depth_scale.row(target_layer - 1);
}

}  // namespace detail

/// Applies a block to one token state.
inline void block_forward_token(const BlockParams& b, std::span<const double> x,
                                std::size_t target_layer, std::span<double> y,
                                TokenCache* cache = nullptr) {
  const std::size_t d = b.dim();
  const auto scale = detail::scale_row(b, target_layer);
  la::Vector local;
  la::Vector& u = cache ? cache->update : local;
  u.assign(d, 0.0);
  if (b.family == BlockFamily::affine) {
    for (std::size_t i = 0; i < d; ++i) {
      const auto row = b.w1.row(i);
      double acc = b.b1[i];
      for (std::size_t j = 0; j < d; ++j) acc += row[j] * x[j];
      u[i] = acc;
    }
    if (scale.empty()) {
      for (std::size_t i = 0; i < d; ++i) y[i] = u[i];
      for (std::size_t i = 0; i < d; ++i) u[i] -= x[i];
      return;
    }
    for (std::size_t i = 0; i < d; ++i) u[i] -= x[i];
  } else {
    const std::size_t h = b.hidden();
    la::Vector hidden_local;
    la::Vector& hid = cache ? cache->hidden : hidden_local;
    hid.assign(h, 0.0);
    for (std::size_t k = 0; k < h; ++k) {
      const auto row = b.w1.row(k);
      double acc = b.b1[k];
      for (std::size_t j = 0; j < d; ++j) acc += row[j] * x[j];
      hid[k] = std::tanh(acc);
    }
    for (std::size_t i = 0; i < d; ++i) {
      const auto row = b.w2.row(i);
      double acc = b.b2[i];
      for (std::size_t k = 0; k < h; ++k) acc += row[k] * hid[k];
      u[i] = acc;
    }
  }
  if (scale.empty()) {
    for (std::size_t i = 0; i < d; ++i) y[i] = x[i] + u[i];
  } else {
    for (std::size_t i = 0; i < d; ++i) y[i] = x[i] + scale[i] * u[i];
  }
}

/// Backpropagates dL/dy through one token's forward pass. Parameter
/// gradients are accumulated into `grad`; dL/dx is written to `gx` unless
/// it is empty.
inline void block_backward_token(const BlockParams& b, std::span<const double> x,
                                 std::size_t target_layer, const TokenCache& cache,
                                 std::span<const double> gy, BlockParams& grad,
                                 std::span<double> gx) {
  const std::size_t d = b.dim();
  const auto scale = detail::scale_row(b, target_layer);
  la::Vector gu(gy.begin(), gy.end());
  if (!scale.empty()) {
    auto gs = grad.depth_scale.row(target_layer - 1);
    for (std::size_t i = 0; i < d; ++i) {
      gs[i] += gy[i] * cache.update[i];
      gu[i] = scale[i] * gy[i];
    }
  }
  if (b.family == BlockFamily::affine) {
    for (std::size_t i = 0; i < d; ++i) {
      auto grow = grad.w1.row(i);
      for (std::size_t j = 0; j < d; ++j) grow[j] += gu[i] * x[j];
      grad.b1[i] += gu[i];
    }
    if (gx.empty()) return;
    for (std::size_t j = 0; j < d; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < d; ++i) acc += b.w1(i, j) * gu[i];
      // Without a scale table the block is y = W x + b; with one, the
      // identity path carries (1 - s) of the input.
      gx[j] = scale.empty() ? acc : gy[j] - gu[j] + acc;
    }
    return;
  }
  const std::size_t h = b.hidden();
  la::Vector gpre(h, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    auto grow = grad.w2.row(i);
    for (std::size_t k = 0; k < h; ++k) grow[k] += gu[i] * cache.hidden[k];
    grad.b2[i] += gu[i];
  }
  for (std::size_t k = 0; k < h; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < d; ++i) acc += b.w2(i, k) * gu[i];
    gpre[k] = acc * (1.0 - cache.hidden[k] * cache.hidden[k]);
  }
  for (std::size_t k = 0; k < h; ++k) {
    auto grow = grad.w1.row(k);
    for (std::size_t j = 0; j < d; ++j) grow[j] += gpre[k] * x[j];
    grad.b1[k] += gpre[k];
  }
  if (gx.empty()) return;
  for (std::size_t j = 0; j < d; ++j) {
    double acc = 0.0;
    for (std::size_t k = 0; k < h; ++k) acc += b.w1(k, j) * gpre[k];
    gx[j] = gy[j] + acc;
  }
}

/// Applies a block to every token of a token-major state block (tokens x dim).
inline la::Vector block_forward(const BlockParams& b, std::span<const double> x,
                                std::size_t target_layer) {
  const std::size_t d = b.dim();
  if (x.size() % d != 0) throw UsageError("block_forward: state size is not a multiple of dim");
  la::Vector y(x.size());
  for (std::size_t off = 0; off < x.size(); off += d) {
    block_forward_token(b, x.subspan(off, d), target_layer, std::span<double>(y).subspan(off, d));
  }
  return y;
}

/// Random block with the given family.
///
/// affine:    W = I + gain * G / sqrt(d), b = 0.1 * N
/// gated-mlp: W1 = G / sqrt(d), b1 = 0.1 * N, W2 = gain * G / sqrt(h), b2 = 0.1 * N
/// where G and N are standard normal draws taken in that order.
inline BlockParams random_block(BlockFamily family, std::size_t dim, std::size_t hidden, double gain,
                                Rng& rng) {
  const double sd = 1.0 / std::sqrt(static_cast<double>(dim));
  if (family == BlockFamily::affine) {
    la::Matrix w = la::Matrix::identity(dim);
    for (auto& x : w.data()) x += gain * sd * rng.normal();
    la::Vector b(dim);
    for (auto& x : b) x = 0.1 * rng.normal();
    return BlockParams::affine(std::move(w), std::move(b));
  }
  if (hidden < 1) throw UsageError("random_block: gated-mlp needs hidden >= 1");
  const double sh = 1.0 / std::sqrt(static_cast<double>(hidden));
  la::Matrix w1(hidden, dim), w2(dim, hidden);
  la::Vector b1(hidden), b2(dim);
  for (auto& x : w1.data()) x = sd * rng.normal();
  for (auto& x : b1) x = 0.1 * rng.normal();
  for (auto& x : w2.data()) x = gain * sh * rng.normal();
  for (auto& x : b2) x = 0.1 * rng.normal();
  return BlockParams::gated_mlp(std::move(w1), std::move(b1), std::move(w2), std::move(b2));
}

}  // namespace depthflow
