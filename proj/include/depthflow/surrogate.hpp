#pragma once

// Recurrent surrogate training and interventions.
//
// The hybrid objective for one sample over target layers first..last is
//
//   loss = lambda * sum_l D(B_l(a_{l-1}), a_l) + (1 - lambda) * sum_l D(B_l(z_{l-1}), a_l) + Omega
//
// where a are teacher states, z the surrogate's own rollout started from
// a_{first-1}, D the token-weighted squared Frobenius distance and Omega the
// L2 penalty (weight_decay / 2) * |W|^2 on weight matrices. Gradients are
// exact: the autoregressive term is backpropagated through the whole chain.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "depthflow/block.hpp"
#include "depthflow/error.hpp"
#include "depthflow/model.hpp"
#include "depthflow/partition.hpp"
#include "depthflow/rng.hpp"
#include "depthflow/trajectory.hpp"

namespace depthflow {

struct TokenWeights {
  double cls = 0.34;
  double reg = 0.33;
  double patch = 0.33;

  double of(TokenRole r) const {
    switch (r) {
      case TokenRole::cls: return cls;
      case TokenRole::reg: return reg;
      case TokenRole::patch: return patch;
    }
    return 0.0;
  }

  void validate() const {
    if (cls < 0 || reg < 0 || patch < 0) throw UsageError("token weights must be nonnegative");
    if (std::abs(cls + reg + patch - 1.0) > 1e-9) throw UsageError("token weights must sum to 1");
  }
};

enum class Stage { stage1, stage2 };

struct TrainConfig {
  Stage stage = Stage::stage1;
  std::optional<double> lambda_initial;  ///< defaults: 0.5 (stage1), 0 (stage2)
  bool anneal = true;                    ///< linear decay to 0 over anneal_fraction of the steps
  double anneal_fraction = 0.25;
  std::optional<TokenWeights> token_weights;  ///< defaults: (.34,.33,.33) / (.45,.10,.45)
  double learning_rate = 1e-2;
  double momentum = 0.0;
  std::size_t steps = 5000;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
  std::size_t log_every = 100;

  double lambda0() const { return lambda_initial.value_or(stage == Stage::stage1 ? 0.5 : 0.0); }

  TokenWeights weights() const {
    if (token_weights) return *token_weights;
    return stage == Stage::stage1 ? TokenWeights{0.34, 0.33, 0.33} : TokenWeights{0.45, 0.10, 0.45};
  }

  double lambda_at(std::size_t step) const {
    const double l0 = lambda0();
    if (!anneal) return l0;
    const double horizon = anneal_fraction * static_cast<double>(steps);
    if (horizon <= 0.0) return 0.0;
    return l0 * std::max(0.0, 1.0 - static_cast<double>(step) / horizon);
  }

  void validate() const {
    const double l0 = lambda0();
    if (!(l0 >= 0.0 && l0 <= 1.0)) throw UsageError("lambda must lie in [0, 1]");
    if (stage == Stage::stage2 && l0 != 0.0)
      throw UsageError("stage2 trains with the autoregressive loss only; lambda must be 0");
    if (!(anneal_fraction >= 0.0 && anneal_fraction <= 1.0))
      throw UsageError("anneal_fraction must lie in [0, 1]");
    weights().validate();
    if (!(learning_rate > 0.0)) throw UsageError("learning_rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw UsageError("momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw UsageError("weight_decay must be nonnegative");
  }
};

struct LossResult {
  double loss = 0.0;     ///< lambda * tf + (1 - lambda) * ar + omega
  double tf = 0.0;       ///< teacher-forcing distance sum
  double ar = 0.0;       ///< autoregressive distance sum
  double omega = 0.0;
  std::vector<BlockParams> grads;  ///< one per model block
};

namespace detail {

inline void require_compatible(const SurrogateModel& m, const Trajectory& t) {
  if (m.dim != t.dim() || m.depth() != t.depth())
    throw UsageError("surrogate/teacher shape mismatch: model dim " + std::to_string(m.dim) +
                     " depth " + std::to_string(m.depth()) + ", teacher dim " +
                     std::to_string(t.dim()) + " depth " + std::to_string(t.depth()));
}

inline double weight_penalty(const SurrogateModel& m, const std::set<std::size_t>& blocks,
                             double weight_decay, std::vector<BlockParams>* grads) {
  if (weight_decay == 0.0) return 0.0;
  double omega = 0.0;
  for (std::size_t j : blocks) {
    const auto& b = m.blocks[j];
    auto add = [&](const la::Matrix& w, la::Matrix* g) {
      for (std::size_t i = 0; i < w.size(); ++i) {
        omega += 0.5 * weight_decay * w.data()[i] * w.data()[i];
        if (g) g->data()[i] += weight_decay * w.data()[i];
      }
    };
    add(b.w1, grads ? &(*grads)[j].w1 : nullptr);
    add(b.w2, grads ? &(*grads)[j].w2 : nullptr);
  }
  return omega;
}

// Adds one sample's TF/AR distances and gradients for target layers
// first..last. Gradient contributions are scaled by `scale`.
inline void accumulate_sample(const SurrogateModel& m, const Trajectory& teacher, std::size_t sample,
                              double lambda, const TokenWeights& weights, std::size_t first,
                              std::size_t last, double scale, double& tf, double& ar,
                              std::vector<BlockParams>* grads) {
  const std::size_t d = m.dim;
  la::Vector y(d), diff(d), gy(d), gx(d);
  TokenCache cache;
  const std::size_t span_len = last - first + 1;
  std::vector<la::Vector> inputs(span_len + 1, la::Vector(d));
  std::vector<TokenCache> caches(span_len);
  for (std::size_t tok = 0; tok < teacher.n_tokens(); ++tok) {
    const double w = weights.of(teacher.role(tok));
    if (w == 0.0) continue;

    for (std::size_t l = first; l <= last; ++l) {
      const auto& b = m.block_for_layer(l);
      const auto x = teacher.state(sample, l - 1, tok);
      const auto target = teacher.state(sample, l, tok);
      block_forward_token(b, x, l, y, &cache);
      double dist = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        diff[i] = y[i] - target[i];
        dist += diff[i] * diff[i];
      }
      tf += w * dist;
      if (grads && lambda != 0.0) {
        for (std::size_t i = 0; i < d; ++i) gy[i] = scale * 2.0 * lambda * w * diff[i];
        block_backward_token(b, x, l, cache, gy, (*grads)[m.block_index(l)], {});
      }
    }

    const auto start = teacher.state(sample, first - 1, tok);
    std::copy(start.begin(), start.end(), inputs[0].begin());
    for (std::size_t l = first; l <= last; ++l) {
      const std::size_t k = l - first;
      block_forward_token(m.block_for_layer(l), inputs[k], l, inputs[k + 1], &caches[k]);
      const auto target = teacher.state(sample, l, tok);
      double dist = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double e = inputs[k + 1][i] - target[i];
        dist += e * e;
      }
      ar += w * dist;
    }
    if (!grads || lambda == 1.0) continue;
    std::fill(gy.begin(), gy.end(), 0.0);
    for (std::size_t l = last; l >= first; --l) {
      const std::size_t k = l - first;
      const auto target = teacher.state(sample, l, tok);
      for (std::size_t i = 0; i < d; ++i)
        gy[i] += scale * 2.0 * (1.0 - lambda) * w * (inputs[k + 1][i] - target[i]);
      const bool need_input_grad = l > first;
      block_backward_token(m.block_for_layer(l), inputs[k], l, caches[k], gy,
                           (*grads)[m.block_index(l)],
                           need_input_grad ? std::span<double>(gx) : std::span<double>());
      if (!need_input_grad) break;
      gy = gx;
    }
  }
}

}  // namespace detail

/// Hybrid loss and exact gradients averaged over `samples`, for target layers
/// first..last (the autoregressive chain starts from the teacher state at
/// layer first - 1). Omega covers the blocks used in that range.
inline LossResult hybrid_loss(const SurrogateModel& m, const Trajectory& teacher,
                              std::span<const std::size_t> samples, double lambda,
                              const TokenWeights& weights, double weight_decay = 0.0,
                              std::size_t first = 1, std::size_t last = 0,
                              bool with_grads = true) {
  detail::require_compatible(m, teacher);
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw UsageError("hybrid_loss: lambda must lie in [0, 1]");
  if (last == 0) last = m.depth();
  if (first < 1 || first > last || last > m.depth()) throw UsageError("hybrid_loss: invalid layer range");
  if (samples.empty()) throw UsageError("hybrid_loss: no samples");
  LossResult r;
  if (with_grads) {
    for (const auto& b : m.blocks) r.grads.push_back(b.zeros_like());
  }
  const double scale = 1.0 / static_cast<double>(samples.size());
  for (std::size_t s : samples) {
    detail::accumulate_sample(m, teacher, s, lambda, weights, first, last, scale, r.tf, r.ar,
                              with_grads ? &r.grads : nullptr);
  }
  r.tf *= scale;
  r.ar *= scale;
  std::set<std::size_t> used;
  for (std::size_t l = first; l <= last; ++l) used.insert(m.block_index(l));
  r.omega = detail::weight_penalty(m, used, weight_decay, with_grads ? &r.grads : nullptr);
  r.loss = lambda * r.tf + (1.0 - lambda) * r.ar + r.omega;
  return r;
}

/// Single-sample form.
inline LossResult hybrid_loss(const SurrogateModel& m, const Trajectory& teacher, std::size_t sample,
                              double lambda, const TokenWeights& weights, double weight_decay = 0.0) {
  const std::size_t s[] = {sample};
  return hybrid_loss(m, teacher, s, lambda, weights, weight_decay);
}

// ---------------------------------------------------------------------------
// Evaluation

/// Mean over samples of |z_l - a_l|_F / |a_l|_F for layers 0..L, where z is
/// the surrogate's full rollout from each sample's layer 0.
template <BlockStack S>
std::vector<double> relative_errors(const S& stack, const Trajectory& teacher) {
  const Trajectory pred = rollout_trajectory(stack, teacher);
  std::vector<double> err(teacher.n_layers(), 0.0);
  for (std::size_t s = 0; s < teacher.n_samples(); ++s) {
    for (std::size_t l = 0; l < teacher.n_layers(); ++l) {
      const auto a = teacher.layer(s, l);
      const auto z = pred.layer(s, l);
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        num += (z[i] - a[i]) * (z[i] - a[i]);
        den += a[i] * a[i];
      }
      err[l] += den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
    }
  }
  for (auto& e : err) e /= static_cast<double>(teacher.n_samples());
  return err;
}

/// Mean over samples and tokens of the cosine between predicted and teacher
/// token states, per layer 0..L.
inline std::vector<double> layer_cosines(const Trajectory& pred, const Trajectory& teacher) {
  std::vector<double> out(teacher.n_layers(), 0.0);
  for (std::size_t s = 0; s < teacher.n_samples(); ++s)
    for (std::size_t l = 0; l < teacher.n_layers(); ++l)
      for (std::size_t t = 0; t < teacher.n_tokens(); ++t) {
        const auto a = teacher.state(s, l, t);
        const auto z = pred.state(s, l, t);
        out[l] += la::dot(a, z) / (la::norm2(a) * la::norm2(z));
      }
  for (auto& c : out) c /= static_cast<double>(teacher.n_samples() * teacher.n_tokens());
  return out;
}

// ---------------------------------------------------------------------------
// Training

struct TrainLogRow {
  Stage stage = Stage::stage1;
  std::size_t block = 0;  ///< stage1: block being trained; stage2: k (all)
  std::size_t step = 0;
  double lambda = 0.0;
  double tf_loss = 0.0;
  double ar_loss = 0.0;
  double total = 0.0;
  std::vector<double> layer_error;  ///< full-rollout relative error per layer 1..L
};

using TrainLogger = std::function<void(const TrainLogRow&)>;

namespace detail {

struct Momentum {
  std::vector<BlockParams> velocity;
};

inline void sgd_step(SurrogateModel& m, const std::vector<BlockParams>& grads, const std::set<std::size_t>& blocks,
                     const TrainConfig& cfg, Momentum& state) {
  if (state.velocity.empty())
    for (const auto& b : m.blocks) state.velocity.push_back(b.zeros_like());
  for (std::size_t j : blocks) {
    std::vector<std::span<double>> params, vel;
    std::vector<std::span<const double>> gs;
    m.blocks[j].for_each_array([&](std::span<double> s) { params.push_back(s); });
    state.velocity[j].for_each_array([&](std::span<double> s) { vel.push_back(s); });
    grads[j].for_each_array([&](std::span<const double> s) { gs.push_back(s); });
    for (std::size_t a = 0; a < params.size(); ++a) {
      for (std::size_t i = 0; i < params[a].size(); ++i) {
        vel[a][i] = cfg.momentum * vel[a][i] + gs[a][i];
        params[a][i] -= cfg.learning_rate * vel[a][i];
      }
    }
  }
}

// Maximal runs of consecutive layers served by block j.
inline std::vector<Segment> runs_of_block(const Partition& p, std::size_t j) {
  std::vector<Segment> runs;
  for (std::size_t l = 1; l <= p.n(); ++l) {
    if (p.group_of(l) != j) continue;
    if (!runs.empty() && runs.back().end + 1 == l) {
      runs.back().end = l;
    } else {
      runs.push_back({l, l});
    }
  }
  return runs;
}

inline void check_finite(double loss, Stage stage, std::size_t step) {
  if (!std::isfinite(loss))
    throw NumericalError(std::string(stage == Stage::stage1 ? "stage1" : "stage2") +
                         " training diverged at step " + std::to_string(step) +
                         "; lower the learning rate or momentum");
}

inline std::vector<std::size_t> all_samples(const Trajectory& t) {
  std::vector<std::size_t> s(t.n_samples());
  std::iota(s.begin(), s.end(), 0);
  return s;
}

inline std::vector<double> interior_errors(const SurrogateModel& m, const Trajectory& teacher) {
  auto e = relative_errors(m, teacher);
  e.erase(e.begin());
  return e;
}

}  // namespace detail

/// Stage 1: every block is trained on its own layers only, with its
/// autoregressive chain restarted from the teacher state preceding each run
/// of layers. Blocks share no parameters, so they are trained one after the
/// other with identical results to training them in parallel.
inline SurrogateModel train_stage1(const Trajectory& teacher, const Partition& schedule,
                                   const TrainConfig& cfg, const ModelShape& shape = {},
                                   const TrainLogger& log = {}) {
  cfg.validate();
  if (cfg.stage != Stage::stage1) throw UsageError("train_stage1 needs a stage1 config");
  schedule.validate(teacher.depth());
  SurrogateModel m = init_model(shape, teacher.dim(), teacher.n_tokens(), schedule, cfg.seed);
  const auto samples = detail::all_samples(teacher);
  const auto weights = cfg.weights();
  detail::Momentum momentum;
  for (std::size_t j = 0; j < m.blocks.size(); ++j) {
    const auto runs = detail::runs_of_block(schedule, j);
    const std::set<std::size_t> active{j};
    for (std::size_t step = 0; step < cfg.steps; ++step) {
      const double lambda = cfg.lambda_at(step);
      std::vector<BlockParams> grads;
      for (const auto& b : m.blocks) grads.push_back(b.zeros_like());
      TrainLogRow row{Stage::stage1, j, step, lambda, 0.0, 0.0, 0.0, {}};
      for (const auto& run : runs) {
        auto r = hybrid_loss(m, teacher, samples, lambda, weights, 0.0, run.begin, run.end);
        row.tf_loss += r.tf;
        row.ar_loss += r.ar;
        for (std::size_t a = 0; a < grads.size(); ++a) {
          std::vector<std::span<double>> dst;
          grads[a].for_each_array([&](std::span<double> s) { dst.push_back(s); });
          std::size_t idx = 0;
          r.grads[a].for_each_array([&](std::span<const double> s) {
            for (std::size_t i = 0; i < s.size(); ++i) dst[idx][i] += s[i];
            ++idx;
          });
        }
      }
      const double omega = detail::weight_penalty(m, active, cfg.weight_decay, &grads);
      row.total = lambda * row.tf_loss + (1.0 - lambda) * row.ar_loss + omega;
      detail::check_finite(row.total, Stage::stage1, step);
      if (log && cfg.log_every > 0 && step % cfg.log_every == 0) {
        row.layer_error = detail::interior_errors(m, teacher);
        log(row);
      }
      detail::sgd_step(m, grads, active, cfg, momentum);
    }
  }
  return m;
}

/// Stage 2: the assembled model is trained end to end on the autoregressive
/// loss over all layers.
inline SurrogateModel train_stage2(SurrogateModel m, const Trajectory& teacher, const TrainConfig& cfg,
                                   const TrainLogger& log = {}) {
  cfg.validate();
  if (cfg.stage != Stage::stage2) throw UsageError("train_stage2 needs a stage2 config");
  detail::require_compatible(m, teacher);
  const auto samples = detail::all_samples(teacher);
  const auto weights = cfg.weights();
  std::set<std::size_t> active;
  for (std::size_t j = 0; j < m.blocks.size(); ++j) active.insert(j);
  detail::Momentum momentum;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    auto r = hybrid_loss(m, teacher, samples, 0.0, weights, cfg.weight_decay);
    detail::check_finite(r.loss, Stage::stage2, step);
    if (log && cfg.log_every > 0 && step % cfg.log_every == 0) {
      TrainLogRow row{Stage::stage2, m.blocks.size(), step, 0.0, r.tf, r.ar, r.loss, {}};
      row.layer_error = detail::interior_errors(m, teacher);
      log(row);
    }
    detail::sgd_step(m, r.grads, active, cfg, momentum);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Perturbation

struct PerturbResult {
  std::vector<la::Vector> baseline;   ///< layers 0..L
  std::vector<la::Vector> perturbed;  ///< layers 0..L
  std::map<TokenRole, double> d_cos;  ///< mean terminal cosine distance per role
  std::map<TokenRole, double> scaled; ///< d_cos / |epsilon| (0 when epsilon = 0)
};

/// Adds epsilon * u (u ~ N(0, I) per token, drawn from `seed`) to the state
/// at `layer` and follows the perturbed trajectory to the final layer.
template <BlockStack S>
PerturbResult perturb_rollout(const S& stack, std::span<const double> a0,
                              std::span<const TokenRole> roles, std::size_t layer, double epsilon,
                              std::uint64_t seed) {
  if (layer > stack.depth()) throw UsageError("perturb_rollout: layer beyond final layer");
  if (roles.empty() || a0.size() % roles.size() != 0)
    throw UsageError("perturb_rollout: state size does not match token count");
  const std::size_t d = a0.size() / roles.size();
  PerturbResult r;
  r.baseline = rollout(stack, a0);
  r.perturbed.assign(r.baseline.begin(), r.baseline.begin() + static_cast<std::ptrdiff_t>(layer) + 1);
  Rng rng(seed);
  for (double& x : r.perturbed[layer]) x += epsilon * rng.normal();
  for (std::size_t l = layer + 1; l <= stack.depth(); ++l)
    r.perturbed.push_back(block_forward(stack.block_for_layer(l), r.perturbed.back(), l));

  std::map<TokenRole, double> counts;
  const auto& base = r.baseline.back();
  const auto& pert = r.perturbed.back();
  for (std::size_t t = 0; t < roles.size(); ++t) {
    const std::span<const double> x(base.data() + t * d, d);
    const std::span<const double> y(pert.data() + t * d, d);
    const double c = la::dot(x, y) / (la::norm2(x) * la::norm2(y));
    r.d_cos[roles[t]] += 1.0 - c;
    counts[roles[t]] += 1.0;
  }
  for (auto& [role, v] : r.d_cos) {
    v /= counts[role];
    r.scaled[role] = epsilon == 0.0 ? 0.0 : v / std::abs(epsilon);
  }
  return r;
}

/// Scaled sensitivity averaged over every sample of `inputs` (layer 0 used
/// as the starting state), per role. Sample i uses seed XOR i.
template <BlockStack S>
std::map<TokenRole, double> mean_sensitivity(const S& stack, const Trajectory& inputs, std::size_t layer,
                                             double epsilon, std::uint64_t seed) {
  std::map<TokenRole, double> acc;
  for (std::size_t s = 0; s < inputs.n_samples(); ++s) {
    const auto r = perturb_rollout(stack, inputs.layer(s, 0), inputs.roles(), layer, epsilon,
                                   Rng::derive(seed, s));
    for (const auto& [role, v] : r.scaled) acc[role] += v;
  }
  for (auto& [role, v] : acc) v /= static_cast<double>(inputs.n_samples());
  return acc;
}

// ---------------------------------------------------------------------------
// Layer swaps

enum class SwapMode { intra, inter };

struct LayerSwap {
  std::size_t target = 0;  ///< layer whose map is replaced
  std::size_t source = 0;  ///< layer whose original map is used instead
};

inline LayerMaps apply_swaps(const LayerMaps& maps, std::span<const LayerSwap> swaps) {
  LayerMaps out = maps;
  for (const auto& s : swaps) {
    if (s.target < 1 || s.target > maps.depth() || s.source < 1 || s.source > maps.depth())
      throw UsageError("layer swap outside 1..L");
    out.maps[s.target - 1] = maps.maps[s.source - 1];
  }
  return out;
}

/// Mean over samples of |x'_L - x_L|_F / |x_L|_F between two stacks run
/// from each sample's layer 0.
template <BlockStack A, BlockStack B>
double final_layer_error(const A& modified, const B& reference, const Trajectory& inputs) {
  double total = 0.0;
  for (std::size_t s = 0; s < inputs.n_samples(); ++s) {
    const auto x = rollout(reference, inputs.layer(s, 0)).back();
    const auto y = rollout(modified, inputs.layer(s, 0)).back();
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      num += (y[i] - x[i]) * (y[i] - x[i]);
      den += x[i] * x[i];
    }
    total += std::sqrt(num / den);
  }
  return total / static_cast<double>(inputs.n_samples());
}

/// Draws `swaps` random target layers, replaces each by a random other layer
/// from the same phase (intra) or another phase (inter), and returns the
/// mean final-layer relative error against the unmodified stack.
inline double layer_swap_eval(const LayerMaps& teacher, const Partition& partition, std::size_t swaps,
                              SwapMode mode, const Trajectory& inputs, std::uint64_t seed) {
  partition.validate(teacher.depth());
  const std::size_t depth = teacher.depth();
  auto sources_for = [&](std::size_t target) {
    std::vector<std::size_t> src;
    for (std::size_t l = 1; l <= depth; ++l) {
      if (l == target) continue;
      const bool same = partition.group_of(l) == partition.group_of(target);
      if ((mode == SwapMode::intra) == same) src.push_back(l);
    }
    return src;
  };
  std::vector<std::size_t> candidates;
  for (std::size_t l = 1; l <= depth; ++l)
    if (!sources_for(l).empty()) candidates.push_back(l);
  if (candidates.size() < swaps)
    throw UsageError("layer_swap_eval: only " + std::to_string(candidates.size()) +
                     " layers can be swapped in this mode");
  Rng rng(seed);
  for (std::size_t i = 0; i < swaps; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(candidates.size() - i));
    std::swap(candidates[i], candidates[j]);
  }
  std::vector<LayerSwap> plan;
  for (std::size_t i = 0; i < swaps; ++i) {
    const auto src = sources_for(candidates[i]);
    plan.push_back({candidates[i], src[rng.below(src.size())]});
  }
  return final_layer_error(apply_swaps(teacher, plan), teacher, inputs);
}

}  // namespace depthflow
