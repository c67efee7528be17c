#pragma once

// Block stacks: a surrogate with k weight-tied blocks applied on a schedule,
// and an untied per-layer stack (synthetic teachers, layer-swap studies).
// Both expose depth() and block_for_layer(l) for l in 1..L.

#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "depthflow/block.hpp"
#include "depthflow/error.hpp"
#include "depthflow/partition.hpp"
#include "depthflow/rng.hpp"
#include "depthflow/trajectory.hpp"

namespace depthflow {

template <class S>
concept BlockStack = requires(const S& s, std::size_t layer) {
  { s.depth() } -> std::convertible_to<std::size_t>;
  { s.block_for_layer(layer) } -> std::convertible_to<const BlockParams&>;
};

struct SurrogateModel {
  std::vector<BlockParams> blocks;
  Partition schedule;
  std::size_t dim = 0;
  std::size_t n_tokens = 0;

  std::size_t depth() const noexcept { return schedule.n(); }
  std::size_t block_index(std::size_t layer) const { return schedule.group_of(layer); }
  const BlockParams& block_for_layer(std::size_t layer) const { return blocks.at(block_index(layer)); }

  void validate() const {
    schedule.validate(schedule.n());
    if (blocks.size() != schedule.k())
      throw UsageError("surrogate: " + std::to_string(blocks.size()) + " blocks for a " +
                       std::to_string(schedule.k()) + "-phase schedule");
    for (const auto& b : blocks) {
      b.validate();
      if (b.dim() != dim) throw UsageError("surrogate: block dimension mismatch");
      if (b.has_depth_scale() && b.depth_scale.rows() != depth())
        throw UsageError("surrogate: depth-scale table must have one row per layer");
    }
  }

  friend bool operator==(const SurrogateModel&, const SurrogateModel&) = default;
};

/// One map per layer, untied.
struct LayerMaps {
  std::vector<BlockParams> maps;

  std::size_t depth() const noexcept { return maps.size(); }
  const BlockParams& block_for_layer(std::size_t layer) const { return maps.at(layer - 1); }

  /// Expands tied blocks over a schedule.
  static LayerMaps expand(std::span<const BlockParams> blocks, const Partition& schedule) {
    if (blocks.size() != schedule.k()) throw UsageError("LayerMaps: block count disagrees with schedule");
    LayerMaps m;
    for (std::size_t l = 1; l <= schedule.n(); ++l) m.maps.push_back(blocks[schedule.group_of(l)]);
    return m;
  }
};

struct ModelShape {
  BlockFamily family = BlockFamily::affine;
  std::size_t hidden = 16;
  bool depth_scale = false;
};

/// Initial surrogate: affine blocks start at the identity map; gated-mlp
/// blocks draw W1 ~ N(0, 1/d) and a small W2 ~ 0.01 N(0, 1/h) from `seed`.
inline SurrogateModel init_model(const ModelShape& shape, std::size_t dim, std::size_t n_tokens,
                                 const Partition& schedule, std::uint64_t seed) {
  SurrogateModel m;
  m.schedule = schedule;
  m.dim = dim;
  m.n_tokens = n_tokens;
  Rng rng(seed);
  for (std::size_t j = 0; j < schedule.k(); ++j) {
    BlockParams b = shape.family == BlockFamily::affine
                        ? BlockParams::identity(dim)
                        : [&] {
                            auto r = random_block(BlockFamily::gated_mlp, dim, shape.hidden, 0.01, rng);
                            for (auto& x : r.b1) x = 0.0;
                            for (auto& x : r.b2) x = 0.0;
                            return r;
                          }();
    if (shape.depth_scale) b.enable_depth_scale(schedule.n());
    m.blocks.push_back(std::move(b));
  }
  m.validate();
  return m;
}

/// States for layers 0..L (each tokens x dim, token-major) obtained by
/// feeding every layer's output into the next block.
template <BlockStack S>
std::vector<la::Vector> rollout(const S& stack, std::span<const double> a0) {
  std::vector<la::Vector> states;
  states.reserve(stack.depth() + 1);
  states.emplace_back(a0.begin(), a0.end());
  for (std::size_t l = 1; l <= stack.depth(); ++l) {
    states.push_back(block_forward(stack.block_for_layer(l), states.back(), l));
  }
  return states;
}

/// Rolls every sample of `reference` forward from its layer 0.
template <BlockStack S>
Trajectory rollout_trajectory(const S& stack, const Trajectory& reference) {
  if (stack.depth() != reference.depth())
    throw UsageError("rollout: stack depth " + std::to_string(stack.depth()) +
                     " does not match trajectory depth " + std::to_string(reference.depth()));
  Trajectory out(reference.n_samples(), reference.n_layers(), reference.roles(), reference.dim());
  for (std::size_t s = 0; s < reference.n_samples(); ++s) {
    const auto states = rollout(stack, reference.layer(s, 0));
    for (std::size_t l = 0; l < states.size(); ++l) {
      auto dst = out.layer(s, l);
      std::copy(states[l].begin(), states[l].end(), dst.begin());
    }
  }
  return out;
}

}  // namespace depthflow
