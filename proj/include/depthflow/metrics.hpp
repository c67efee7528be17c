#pragma once

// Per-layer dynamics of token trajectories on the unit sphere.
//
// Aggregation order for every per-role statistic: per token, averaged over
// the role's tokens within a sample, then averaged over samples.

#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "depthflow/error.hpp"
#include "depthflow/linalg.hpp"
#include "depthflow/report.hpp"
#include "depthflow/trajectory.hpp"

namespace depthflow {

using RoleSeries = std::map<TokenRole, std::vector<double>>;

inline constexpr double kCosineClampTolerance = 1e-9;

/// Clamps an inner product of unit vectors into [-1, 1]; values further than
/// the tolerance outside signal corrupted input.
inline double clamp_cosine(double c) {
  if (c > 1.0 + kCosineClampTolerance || c < -1.0 - kCosineClampTolerance || std::isnan(c))
    throw NumericalError("cosine " + format_double(c) + " outside [-1, 1] beyond tolerance");
  return std::clamp(c, -1.0, 1.0);
}

inline Trajectory normalize_states(const Trajectory& t) {
  Trajectory out = t;
  for (std::size_t s = 0; s < t.n_samples(); ++s)
    for (std::size_t l = 0; l < t.n_layers(); ++l)
      for (std::size_t k = 0; k < t.n_tokens(); ++k) {
        auto x = out.state(s, l, k);
        const double n = la::norm2(std::span<const double>(x));
        if (n == 0.0 || !std::isfinite(n))
          throw DataError("zero-norm state at sample " + std::to_string(s) + ", layer " + std::to_string(l) +
                          ", token " + std::to_string(k));
        for (double& v : x) v /= n;
      }
  return out;
}

namespace detail {

// Per-role mean of f(sample, token) with the documented aggregation order.
template <class F>
std::map<TokenRole, double> role_mean(const Trajectory& t, F&& f) {
  std::map<TokenRole, double> out;
  for (TokenRole r : t.present_roles()) {
    const auto tokens = t.tokens_with(r);
    double total = 0.0;
    for (std::size_t s = 0; s < t.n_samples(); ++s) {
      double acc = 0.0;
      for (std::size_t k : tokens) acc += f(s, k);
      total += acc / static_cast<double>(tokens.size());
    }
    out[r] = total / static_cast<double>(t.n_samples());
  }
  return out;
}

inline la::Vector update_row(const Trajectory& unit, std::size_t s, std::size_t layer, std::size_t k) {
  const auto a = unit.state(s, layer, k);
  const auto b = unit.state(s, layer + 1, k);
  la::Vector d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = b[i] - a[i];
  return d;
}

inline void check_layer(const Trajectory& t, std::size_t layer, bool needs_next) {
  if (layer >= t.n_layers() || (needs_next && layer + 1 >= t.n_layers()))
    throw UsageError("layer " + std::to_string(layer) + " out of range for a trajectory with layers 0.." +
                     std::to_string(t.depth()));
}

}  // namespace detail

/// Mean Euclidean norm of raw token states per role, layers 0..L.
inline RoleSeries mean_norm(const Trajectory& t) {
  RoleSeries out;
  for (std::size_t l = 0; l < t.n_layers(); ++l)
    for (const auto& [r, v] : detail::role_mean(t, [&](std::size_t s, std::size_t k) {
           return la::norm2(t.state(s, l, k));
         }))
      out[r].push_back(v);
  return out;
}

/// gamma_l = <x^_l, x^_L> per role, layers 0..L.
inline RoleSeries directional_convergence(const Trajectory& t) {
  const Trajectory u = normalize_states(t);
  const std::size_t last = t.depth();
  RoleSeries out;
  for (std::size_t l = 0; l < t.n_layers(); ++l)
    for (const auto& [r, v] : detail::role_mean(u, [&](std::size_t s, std::size_t k) {
           return l == last ? 1.0 : clamp_cosine(la::dot(u.state(s, l, k), u.state(s, last, k)));
         }))
      out[r].push_back(v);
  return out;
}

/// s_l = arccos <x^_{l+1}, x^_l> per role, layers 0..L-1.
inline RoleSeries angular_speed(const Trajectory& t) {
  const Trajectory u = normalize_states(t);
  RoleSeries out;
  for (std::size_t l = 0; l + 1 < t.n_layers(); ++l)
    for (const auto& [r, v] : detail::role_mean(u, [&](std::size_t s, std::size_t k) {
           const auto a = u.state(s, l + 1, k), b = u.state(s, l, k);
           if (std::ranges::equal(a, b)) return 0.0;
           return std::acos(clamp_cosine(la::dot(a, b)));
         }))
      out[r].push_back(v);
  return out;
}

/// Update matrix at `layer`: one row x^_{l+1} - x^_l per selected token and
/// sample (sample-major).
inline la::Matrix update_matrix(const Trajectory& t, std::size_t layer, const RoleSet& roles) {
  detail::check_layer(t, layer, true);
  const auto tokens = t.tokens_with(roles);
  if (tokens.empty()) throw UsageError("update_matrix: no tokens with the selected roles");
  const Trajectory u = normalize_states(t);
  la::Matrix m(t.n_samples() * tokens.size(), t.dim());
  std::size_t row = 0;
  for (std::size_t s = 0; s < t.n_samples(); ++s)
    for (std::size_t k : tokens) {
      const auto d = detail::update_row(u, s, layer, k);
      std::copy(d.begin(), d.end(), m.row(row++).begin());
    }
  return m;
}

struct RankPair {
  double stable = 0.0;
  double effective = 0.0;
};

/// Stable rank |U|_F^2 / sigma_max^2 and entropy effective rank
/// exp(-sum p_i log p_i), p_i = sigma_i / sum sigma.
inline RankPair spectrum_ranks(std::span<const double> sigma) {
  double fro = 0.0, total = 0.0;
  for (double s : sigma) {
    fro += s * s;
    total += s;
  }
  if (sigma.empty() || sigma.front() == 0.0) throw NumericalError("rank undefined for a zero update matrix");
  double entropy = 0.0;
  for (double s : sigma) {
    const double p = s / total;
    if (p > 0.0) entropy -= p * std::log(p);
  }
  return {fro / (sigma.front() * sigma.front()), std::exp(entropy)};
}

inline RankPair update_rank(const Trajectory& t, std::size_t layer, const RoleSet& roles) {
  const auto m = update_matrix(t, layer, roles);
  const auto s = la::svd(m);
  return spectrum_ranks(s.sigma);
}

/// kappa_l: mean cosine between each selected token's update and the mean
/// update of that sample, averaged over samples.
inline double coherence(const Trajectory& t, std::size_t layer, const RoleSet& roles) {
  detail::check_layer(t, layer, true);
  const auto tokens = t.tokens_with(roles);
  if (tokens.empty()) throw UsageError("coherence: no tokens with the selected roles");
  const Trajectory u = normalize_states(t);
  double total = 0.0;
  for (std::size_t s = 0; s < t.n_samples(); ++s) {
    std::vector<la::Vector> rows;
    la::Vector mean(t.dim(), 0.0);
    for (std::size_t k : tokens) {
      rows.push_back(detail::update_row(u, s, layer, k));
      for (std::size_t i = 0; i < t.dim(); ++i) mean[i] += rows.back()[i] / static_cast<double>(tokens.size());
    }
    const double nm = la::norm2(std::span<const double>(mean));
    if (nm == 0.0)
      throw NumericalError("coherence: mean update is zero at sample " + std::to_string(s) + ", layer " +
                           std::to_string(layer));
    double acc = 0.0;
    for (const auto& r : rows) {
      const double nr = la::norm2(std::span<const double>(r));
      if (nr == 0.0)
        throw NumericalError("coherence: zero token update at sample " + std::to_string(s) + ", layer " +
                             std::to_string(layer));
      acc += clamp_cosine(la::dot(r, mean) / (nr * nm));
    }
    total += acc / static_cast<double>(rows.size());
  }
  return total / static_cast<double>(t.n_samples());
}

inline double coherence(const Trajectory& t, std::size_t layer) {
  return coherence(t, layer, RoleSet{TokenRole::patch});
}

/// R^2 of the 1-D least-squares fit teacher ~ a * student + c over the
/// entries of one token vector, clipped below at 0. A constant teacher
/// vector is fitted exactly by the intercept and scores 1.
inline double token_r2(std::span<const double> student, std::span<const double> teacher) {
  const std::size_t n = student.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += student[i];
    my += teacher[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = student[i] - mx, dy = teacher[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (syy == 0.0) return 1.0;
  if (sxx == 0.0) return 0.0;
  const double ss_res = syy - sxy * sxy / sxx;
  return std::max(0.0, 1.0 - ss_res / syy);
}

/// Mean R^2 over samples and selected tokens at one layer.
inline double alignment_r2(const Trajectory& student, const Trajectory& teacher, const RoleSet& roles,
                           std::size_t layer) {
  if (student.n_samples() != teacher.n_samples() || student.n_layers() != teacher.n_layers() ||
      student.dim() != teacher.dim() || student.roles() != teacher.roles())
    throw UsageError("alignment_r2: student and teacher shapes differ");
  detail::check_layer(teacher, layer, false);
  const auto tokens = teacher.tokens_with(roles);
  if (tokens.empty()) throw UsageError("alignment_r2: no tokens with the selected roles");
  double total = 0.0;
  for (std::size_t s = 0; s < teacher.n_samples(); ++s) {
    double acc = 0.0;
    for (std::size_t k : tokens) acc += token_r2(student.state(s, layer, k), teacher.state(s, layer, k));
    total += acc / static_cast<double>(tokens.size());
  }
  return total / static_cast<double>(teacher.n_samples());
}

// ---------------------------------------------------------------------------
// Report

struct DynamicsRow {
  std::size_t layer = 0;
  TokenRole role = TokenRole::cls;
  double mean_norm = 0.0;
  double gamma = 0.0;
  double angular_speed = std::numeric_limits<double>::quiet_NaN();
  double stable_rank = std::numeric_limits<double>::quiet_NaN();
  double effective_rank = std::numeric_limits<double>::quiet_NaN();
  double coherence = std::numeric_limits<double>::quiet_NaN();
};

/// One row per layer and role. Update-based columns (angular speed, ranks,
/// coherence) describe the step from layer l to l + 1 and are undefined
/// (NaN) at the final layer or where the update is degenerate.
struct DynamicsReport {
  std::vector<DynamicsRow> rows;

  std::vector<double> column(TokenRole role, double DynamicsRow::*field) const {
    std::vector<double> out;
    for (const auto& r : rows)
      if (r.role == role) out.push_back(r.*field);
    return out;
  }
};

inline DynamicsReport dynamics_report(const Trajectory& t) {
  const auto norms = mean_norm(t);
  const auto gamma = directional_convergence(t);
  const auto speed = angular_speed(t);
  DynamicsReport rep;
  for (std::size_t l = 0; l < t.n_layers(); ++l) {
    for (TokenRole r : t.present_roles()) {
      DynamicsRow row;
      row.layer = l;
      row.role = r;
      row.mean_norm = norms.at(r)[l];
      row.gamma = gamma.at(r)[l];
      if (l + 1 < t.n_layers()) {
        row.angular_speed = speed.at(r)[l];
        try {
          const auto ranks = update_rank(t, l, {r});
          row.stable_rank = ranks.stable;
          row.effective_rank = ranks.effective;
        } catch (const NumericalError&) {
        }
        try {
          row.coherence = coherence(t, l, {r});
        } catch (const NumericalError&) {
        }
      }
      rep.rows.push_back(row);
    }
  }
  return rep;
}

inline std::string to_csv(const DynamicsReport& rep) {
  CsvTable csv({"layer", "role", "mean_norm", "gamma", "angular_speed", "stable_rank", "effective_rank",
                "coherence"});
  for (const auto& r : rep.rows)
    csv.row()
        .add(r.layer)
        .add(std::string(role_name(r.role)))
        .add(r.mean_norm)
        .add(r.gamma)
        .add(r.angular_speed)
        .add(r.stable_rank)
        .add(r.effective_rank)
        .add(r.coherence);
  return csv.str();
}

inline nlohmann::json to_json(const DynamicsReport& rep) {
  auto num = [](double x) { return std::isnan(x) ? nlohmann::json(nullptr) : nlohmann::json(x); };
  auto rows = nlohmann::json::array();
  for (const auto& r : rep.rows)
    rows.push_back({{"layer", r.layer},
                    {"role", role_name(r.role)},
                    {"mean_norm", num(r.mean_norm)},
                    {"gamma", num(r.gamma)},
                    {"angular_speed", num(r.angular_speed)},
                    {"stable_rank", num(r.stable_rank)},
                    {"effective_rank", num(r.effective_rank)},
                    {"coherence", num(r.coherence)}});
  return {{"rows", rows}};
}

}  // namespace depthflow
