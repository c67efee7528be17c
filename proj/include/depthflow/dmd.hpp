#pragma once

// Exact dynamic mode decomposition of depth trajectories.
//
// With X1 = [x_0 .. x_{L-1}], X2 = [x_1 .. x_L] and X1 = U S V^T truncated to
// rank r:
//   A~  = U_r^T X2 V_r S_r^-1,  A~ W = W Lambda
//   Phi = X2 V_r S_r^-1 W,      b = Phi^+ x_0,   x_t ~ Phi Lambda^t b
// No affine offset is fitted.

#include <cmath>
#include <complex>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "depthflow/error.hpp"
#include "depthflow/linalg.hpp"
#include "depthflow/trajectory.hpp"

namespace depthflow {

inline constexpr std::size_t kDefaultDmdRank = 10;
inline constexpr double kDmdRankTolerance = 1e-10;

struct DmdModel {
  std::size_t rank = 0;
  la::ComplexVector eigenvalues;
  la::ComplexMatrix modes;  ///< d x r
  la::ComplexVector amplitudes;
  la::Matrix reduced_op;  ///< r x r
  la::Vector singular_values;  ///< full spectrum of X1
  double fit_residual = 0.0;   ///< |X2 - A X1|_F / |X2|_F for the rank-r operator

  std::size_t dim() const noexcept { return modes.rows(); }
};

/// Per-sample group states for layers 0..L: mean of the role's tokens,
/// normalised to unit length.
inline std::vector<std::vector<la::Vector>> group_average(const Trajectory& t, TokenRole role) {
  const auto tokens = t.tokens_with(role);
  if (tokens.empty()) throw UsageError("group_average: no '" + std::string(role_name(role)) + "' tokens");
  std::vector<std::vector<la::Vector>> out(t.n_samples());
  for (std::size_t s = 0; s < t.n_samples(); ++s) {
    for (std::size_t l = 0; l < t.n_layers(); ++l) {
      la::Vector z(t.dim(), 0.0);
      for (std::size_t k : tokens) {
        const auto x = t.state(s, l, k);
        for (std::size_t i = 0; i < z.size(); ++i) z[i] += x[i];
      }
      for (double& v : z) v /= static_cast<double>(tokens.size());
      const double n = la::norm2(std::span<const double>(z));
      if (n == 0.0)
        throw DataError("group_average: zero-norm group state at sample " + std::to_string(s) + ", layer " +
                        std::to_string(l));
      for (double& v : z) v /= n;
      out[s].push_back(std::move(z));
    }
  }
  return out;
}

namespace detail {

inline void check_unit(std::span<const la::Vector> states) {
  for (std::size_t l = 0; l < states.size(); ++l) {
    const double n = la::norm2(std::span<const double>(states[l]));
    if (std::abs(n - 1.0) > 1e-9)
      throw UsageError("fit_dmd: state " + std::to_string(l) + " is not unit norm (" + std::to_string(n) + ")");
  }
}

inline DmdModel fit_from_snapshots(const la::Matrix& x1, const la::Matrix& x2, std::span<const double> x0,
                                   std::size_t rank) {
  if (rank < 1) throw UsageError("fit_dmd: rank must be >= 1");
  if (rank > x1.cols()) throw UsageError("fit_dmd: rank exceeds the number of snapshot pairs");
  const auto s = la::svd(x1);
  const std::size_t nrank = la::numerical_rank(s.sigma, kDmdRankTolerance);
  if (rank > nrank)
    throw NumericalError("fit_dmd: rank " + std::to_string(rank) + " exceeds the numerical rank " +
                         std::to_string(nrank) + " of the snapshot matrix");
  const std::size_t d = x1.rows();
  la::Matrix ur(d, rank), vs(x1.cols(), rank);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t k = 0; k < rank; ++k) ur(i, k) = s.u(i, k);
  for (std::size_t i = 0; i < x1.cols(); ++i)
    for (std::size_t k = 0; k < rank; ++k) vs(i, k) = s.v(i, k) / s.sigma[k];
  const la::Matrix x2vs = x2 * vs;  // d x r
  DmdModel m;
  m.rank = rank;
  m.singular_values = s.sigma;
  m.reduced_op = ur.transpose() * x2vs;
  const auto e = la::eig_general(m.reduced_op);
  m.eigenvalues = e.values;
  m.modes = la::to_complex(x2vs) * e.vectors;
  const auto phi_pinv = la::pinv(m.modes);
  la::ComplexVector x0c(x0.begin(), x0.end());
  m.amplitudes = phi_pinv * std::span<const la::Complex>(x0c);

  // A X1 = X2 V_r V_r^T, so the residual is the part of X2 outside that projection.
  la::Matrix vr(x1.cols(), rank);
  for (std::size_t i = 0; i < x1.cols(); ++i)
    for (std::size_t k = 0; k < rank; ++k) vr(i, k) = s.v(i, k);
  const la::Matrix fitted = (x2 * vr) * vr.transpose();
  const double den = la::frobenius_norm(x2);
  m.fit_residual = den > 0 ? la::frobenius_norm(x2 - fitted) / den : 0.0;
  return m;
}

inline la::Matrix columns(std::span<const la::Vector> states, std::size_t first, std::size_t count) {
  const std::size_t d = states.front().size();
  la::Matrix m(d, count);
  for (std::size_t c = 0; c < count; ++c) {
    if (states[first + c].size() != d) throw UsageError("fit_dmd: states have different dimensions");
    m.set_column(c, states[first + c]);
  }
  return m;
}

}  // namespace detail

/// Fits exact DMD to one trajectory x_0..x_L. Unit-norm states are required
/// unless `require_unit_norm` is false (raw linear sequences).
inline DmdModel fit_dmd(std::span<const la::Vector> states, std::size_t rank = kDefaultDmdRank,
                        bool require_unit_norm = true) {
  if (states.size() < 2) throw UsageError("fit_dmd: need at least two states");
  if (require_unit_norm) detail::check_unit(states);
  const std::size_t pairs = states.size() - 1;
  return detail::fit_from_snapshots(detail::columns(states, 0, pairs), detail::columns(states, 1, pairs),
                                    states.front(), rank);
}

/// One DMD fit over the snapshot pairs of every trajectory; amplitudes refer
/// to the first trajectory's initial state.
inline DmdModel fit_dmd_pooled(std::span<const std::vector<la::Vector>> trajectories,
                               std::size_t rank = kDefaultDmdRank, bool require_unit_norm = true) {
  if (trajectories.empty()) throw UsageError("fit_dmd_pooled: no trajectories");
  std::size_t pairs = 0;
  for (const auto& t : trajectories) {
    if (t.size() < 2) throw UsageError("fit_dmd_pooled: every trajectory needs two states");
    if (require_unit_norm) detail::check_unit(t);
    pairs += t.size() - 1;
  }
  const std::size_t d = trajectories.front().front().size();
  la::Matrix x1(d, pairs), x2(d, pairs);
  std::size_t c = 0;
  for (const auto& t : trajectories)
    for (std::size_t l = 0; l + 1 < t.size(); ++l, ++c) {
      x1.set_column(c, t[l]);
      x2.set_column(c, t[l + 1]);
    }
  return detail::fit_from_snapshots(x1, x2, trajectories.front().front(), rank);
}

/// x^_t = Phi Lambda^t b.
inline la::ComplexVector predict(const DmdModel& m, std::size_t t) {
  la::ComplexVector coeff = m.amplitudes;
  for (std::size_t k = 0; k < m.rank; ++k)
    for (std::size_t step = 0; step < t; ++step) coeff[k] *= m.eigenvalues[k];
  return m.modes * std::span<const la::Complex>(coeff);
}

inline nlohmann::json complex_json(const la::Complex& z) { return nlohmann::json::array({z.real(), z.imag()}); }

inline nlohmann::json to_json(const DmdModel& m) {
  auto values = nlohmann::json::array(), amps = nlohmann::json::array(), modes = nlohmann::json::array(),
       op = nlohmann::json::array();
  for (const auto& z : m.eigenvalues) values.push_back(complex_json(z));
  for (const auto& z : m.amplitudes) amps.push_back(complex_json(z));
  for (std::size_t i = 0; i < m.modes.rows(); ++i) {
    auto row = nlohmann::json::array();
    for (const auto& z : m.modes.row(i)) row.push_back(complex_json(z));
    modes.push_back(row);
  }
  for (std::size_t i = 0; i < m.reduced_op.rows(); ++i) {
    auto r = m.reduced_op.row(i);
    op.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return {{"rank", m.rank},          {"eigenvalues", values}, {"amplitudes", amps},
          {"modes", modes},          {"reduced_op", op},      {"singular_values", m.singular_values},
          {"fit_residual", m.fit_residual}};
}

}  // namespace depthflow
