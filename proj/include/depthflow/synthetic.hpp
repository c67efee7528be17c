#pragma once

// Synthetic block-recurrent teachers with known phase structure.

#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "depthflow/block.hpp"
#include "depthflow/error.hpp"
#include "depthflow/model.hpp"
#include "depthflow/partition.hpp"
#include "depthflow/rng.hpp"
#include "depthflow/trajectory.hpp"

namespace depthflow {

struct SyntheticTeacherSpec {
  std::size_t dim = 0;
  std::vector<TokenRole> roles;
  std::vector<BlockParams> blocks;
  std::vector<std::size_t> schedule;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  std::size_t depth() const {
    std::size_t l = 0;
    for (auto n : schedule) l += n;
    return l;
  }

  void validate() const {
    if (dim < 1) throw UsageError("teacher spec: dim must be >= 1");
    if (std::count(roles.begin(), roles.end(), TokenRole::cls) != 1)
      throw UsageError("teacher spec: exactly one cls token is required");
    if (blocks.empty() || blocks.size() != schedule.size())
      throw UsageError("teacher spec: need one block per schedule entry");
    for (auto n : schedule)
      if (n < 1) throw UsageError("teacher spec: schedule entries must be >= 1");
    if (!(noise_sigma >= 0.0)) throw UsageError("teacher spec: noise_sigma must be >= 0");
    for (const auto& b : blocks) {
      b.validate();
      if (b.dim() != dim) throw UsageError("teacher spec: block dimension mismatch");
    }
  }

  Partition partition() const { return Partition::from_schedule(std::span<const std::size_t>(schedule)); }
  LayerMaps layer_maps() const { return LayerMaps::expand(blocks, partition()); }
};

/// Layer 0 is standard normal per token; each following layer applies the
/// active block and adds N(0, noise_sigma^2) noise. Sample i uses the stream
/// seeded with seed XOR i, so samples can be generated independently.
inline std::pair<Trajectory, Partition> generate_teacher(const SyntheticTeacherSpec& spec,
                                                         std::size_t n_samples) {
  spec.validate();
  if (n_samples < 1) throw UsageError("generate_teacher: n_samples must be >= 1");
  const LayerMaps maps = spec.layer_maps();
  const std::size_t depth = maps.depth();
  Trajectory t(n_samples, depth + 1, spec.roles, spec.dim);
  for (std::size_t s = 0; s < n_samples; ++s) {
    Rng rng(Rng::derive(spec.seed, s));
    for (double& x : t.layer(s, 0)) x = rng.normal();
    for (std::size_t l = 1; l <= depth; ++l) {
      const auto next = block_forward(maps.block_for_layer(l), t.layer(s, l - 1), l);
      auto dst = t.layer(s, l);
      for (std::size_t i = 0; i < next.size(); ++i) {
        dst[i] = next[i];
        if (spec.noise_sigma > 0.0) dst[i] += spec.noise_sigma * rng.normal();
      }
    }
  }
  return {std::move(t), spec.partition()};
}

// ---------------------------------------------------------------------------
// JSON

namespace detail {

inline la::Matrix matrix_from_json(const nlohmann::json& j) {
  const std::size_t rows = j.size();
  const std::size_t cols = rows == 0 ? 0 : j.at(0).size();
  la::Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (j.at(i).size() != cols) throw UsageError("ragged matrix in JSON");
    for (std::size_t c = 0; c < cols; ++c) m(i, c) = j.at(i).at(c).get<double>();
  }
  return m;
}

inline nlohmann::json matrix_to_json(const la::Matrix& m) {
  auto out = nlohmann::json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    out.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return out;
}

}  // namespace detail

/// Block description accepted in teacher spec files:
///   {"family": "affine", "init": "identity"}
///   {"family": "affine", "scale": 0.5, "bias": [..]}             W = scale * I
///   {"family": "affine", "weight": [[..]..], "bias": [..]}
///   {"family": "affine" | "gated-mlp", "init": "random", "gain": g, "hidden": h, "seed": s}
///   {"family": "gated-mlp", "w1": .., "b1": .., "w2": .., "b2": ..}
inline BlockParams block_from_json(const nlohmann::json& j, std::size_t dim, std::uint64_t default_seed) {
  const BlockFamily family = parse_family(j.value("family", std::string("affine")));
  const std::string init = j.value("init", std::string());
  if (init == "random") {
    Rng rng(j.value("seed", default_seed));
    return random_block(family, dim, j.value("hidden", std::size_t{16}), j.value("gain", 0.3), rng);
  }
  if (family == BlockFamily::affine) {
    la::Vector b = j.contains("bias") ? j.at("bias").get<la::Vector>() : la::Vector(dim, 0.0);
    if (init == "identity") return BlockParams::identity(dim);
    if (j.contains("scale")) {
      la::Matrix w = la::Matrix::identity(dim);
      for (auto& x : w.data()) x *= j.at("scale").get<double>();
      return BlockParams::affine(std::move(w), std::move(b));
    }
    if (j.contains("weight")) return BlockParams::affine(detail::matrix_from_json(j.at("weight")), std::move(b));
    throw UsageError("affine block needs 'init', 'scale' or 'weight'");
  }
  if (j.contains("w1")) {
    return BlockParams::gated_mlp(detail::matrix_from_json(j.at("w1")), j.at("b1").get<la::Vector>(),
                                  detail::matrix_from_json(j.at("w2")), j.at("b2").get<la::Vector>());
  }
  throw UsageError("gated-mlp block needs 'init': 'random' or explicit w1/b1/w2/b2");
}

/// Teacher spec file:
///   {"dim": d, "registers": R, "patches": P, "schedule": [n_1, ..],
///    "noise_sigma": s, "seed": seed, "blocks": [block, ..]}
/// "roles": ["cls", "patch", ..] may replace registers/patches.
inline SyntheticTeacherSpec teacher_spec_from_json(const nlohmann::json& j) {
  SyntheticTeacherSpec spec;
  spec.dim = j.at("dim").get<std::size_t>();
  if (j.contains("roles")) {
    for (const auto& r : j.at("roles")) spec.roles.push_back(parse_role(r.get<std::string>()));
  } else {
    spec.roles = make_roles(j.value("registers", std::size_t{0}), j.value("patches", std::size_t{0}));
  }
  spec.schedule = j.at("schedule").get<std::vector<std::size_t>>();
  spec.noise_sigma = j.value("noise_sigma", 0.0);
  spec.seed = j.value("seed", std::uint64_t{0});
  std::uint64_t block_seed = spec.seed + 1;
  for (const auto& b : j.at("blocks")) spec.blocks.push_back(block_from_json(b, spec.dim, block_seed++));
  spec.validate();
  return spec;
}

}  // namespace depthflow
