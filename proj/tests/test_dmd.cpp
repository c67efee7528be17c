#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "depthflow/dmd.hpp"
#include "depthflow/rng.hpp"

using namespace depthflow;
using la::Complex;

namespace {

std::vector<la::Vector> rotation_sequence(double theta, std::size_t layers) {
  std::vector<la::Vector> out;
  for (std::size_t l = 0; l < layers; ++l)
    out.push_back({std::cos(theta * static_cast<double>(l)), std::sin(theta * static_cast<double>(l))});
  return out;
}

double distance(const la::ComplexVector& a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) acc += std::norm(a[i] - b[i]);
  return std::sqrt(acc);
}

// x_{t+1} = A x_t with A = B C of rank r; x_0 lies in range(B).
std::vector<la::Vector> low_rank_linear(std::size_t d, std::size_t r, std::size_t layers, Rng& rng) {
  la::Matrix b(d, r), c(r, d);
  for (auto& x : b.data()) x = rng.normal();
  // Choose C so that C B has eigenvalues with modulus in [0.7, 1.05].
  la::Matrix target(r, r);
  for (std::size_t i = 0; i < r; ++i) target(i, i) = rng.uniform(0.7, 1.05);
  c = target * la::pinv(b);
  const la::Matrix a = b * c;
  la::Vector z(r);
  for (double& x : z) x = rng.normal();
  std::vector<la::Vector> out{b * std::span<const double>(z)};
  for (std::size_t l = 1; l < layers; ++l) out.push_back(a * std::span<const double>(out.back()));
  return out;
}

}  // namespace

TEST(Dmd, ConstantSequenceHasUnitEigenvalue) {
  const std::vector<la::Vector> seq(6, la::Vector{0.6, 0.8, 0.0});
  const auto m = fit_dmd(seq, 1);
  ASSERT_EQ(m.eigenvalues.size(), 1u);
  EXPECT_NEAR(std::abs(m.eigenvalues[0] - Complex(1.0, 0.0)), 0.0, 1e-12);
  EXPECT_NEAR(m.fit_residual, 0.0, 1e-12);
  EXPECT_NEAR(distance(predict(m, 5), seq[5]), 0.0, 1e-12);
}

TEST(Dmd, RotationHasUnitModulusAndReturnsAfterPeriod) {
  const double theta = 2 * std::numbers::pi / 8;
  const auto seq = rotation_sequence(theta, 12);
  const auto m = fit_dmd(seq, 2);
  for (const auto& z : m.eigenvalues) {
    EXPECT_NEAR(std::abs(z), 1.0, 1e-10);
    EXPECT_NEAR(std::abs(std::arg(z)), theta, 1e-10);
  }
  EXPECT_NEAR(distance(predict(m, 8), seq[0]), 0.0, 1e-9);
  for (std::size_t t = 0; t < seq.size(); ++t) EXPECT_NEAR(distance(predict(m, t), seq[t]), 0.0, 1e-9);
}

TEST(Dmd, PredictAtZeroAndOne) {
  const auto seq = rotation_sequence(0.3, 6);
  const auto m = fit_dmd(seq, 2);
  EXPECT_NEAR(distance(predict(m, 0), seq[0]), 0.0, 1e-10);
  EXPECT_NEAR(distance(predict(m, 1), seq[1]), 0.0, 1e-10);
}

TEST(Dmd, RealDataGivesRealPredictions) {
  Rng rng(3);
  const auto seq = low_rank_linear(8, 3, 16, rng);
  const auto m = fit_dmd(seq, 3, false);
  for (std::size_t t = 0; t < seq.size(); ++t)
    for (const auto& z : predict(m, t)) EXPECT_LT(std::abs(z.imag()), 1e-8 * (1.0 + std::abs(z.real())));
}

TEST(Dmd, ExactRecoveryOfLowRankLinearDynamics) {
  Rng rng(4);
  for (std::size_t r : {2u, 3u, 5u}) {
    const auto seq = low_rank_linear(10, r, 24, rng);
    const auto m = fit_dmd(seq, r, false);
    EXPECT_LT(m.fit_residual, 1e-8);
    for (std::size_t t = 0; t < seq.size(); ++t)
      EXPECT_LT(distance(predict(m, t), seq[t]), 1e-7 * (1.0 + la::norm2(std::span<const double>(seq[t]))));
  }
}

TEST(Dmd, ResidualNonincreasingInRank) {
  Rng rng(5);
  std::vector<la::Vector> seq;
  for (int l = 0; l < 12; ++l) {
    la::Vector x(6);
    for (double& v : x) v = rng.normal();
    const double n = la::norm2(std::span<const double>(x));
    for (double& v : x) v /= n;
    seq.push_back(x);
  }
  double prev = INFINITY;
  for (std::size_t r = 1; r <= 6; ++r) {
    const double res = fit_dmd(seq, r).fit_residual;
    EXPECT_LE(res, prev + 1e-12);
    prev = res;
  }
}

TEST(Dmd, RankAboveNumericalRankIsNumericalError) {
  const auto seq = rotation_sequence(0.4, 8);
  try {
    fit_dmd(seq, 3);
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("rank 3"), std::string::npos);
  }
  const std::vector<la::Vector> constant(5, la::Vector{1.0, 0.0, 0.0});
  EXPECT_THROW(fit_dmd(constant, 2), NumericalError);
}

TEST(Dmd, RejectsNonUnitStatesUnlessAllowed) {
  const std::vector<la::Vector> seq{{2.0, 0.0}, {0.0, 2.0}, {-2.0, 0.0}};
  EXPECT_THROW(fit_dmd(seq, 2), UsageError);
  EXPECT_NO_THROW(fit_dmd(seq, 2, false));
  EXPECT_THROW(fit_dmd(std::vector<la::Vector>{{1.0, 0.0}}, 1), UsageError);
  EXPECT_THROW(fit_dmd(seq, 0, false), UsageError);
}

TEST(Dmd, PooledFitMatchesSharedOperator) {
  const double theta = 0.5;
  std::vector<std::vector<la::Vector>> trajs;
  for (double phase : {0.0, 1.0, 2.5}) {
    std::vector<la::Vector> t;
    for (int l = 0; l < 6; ++l) t.push_back({std::cos(phase + theta * l), std::sin(phase + theta * l)});
    trajs.push_back(t);
  }
  const auto m = fit_dmd_pooled(trajs, 2);
  for (const auto& z : m.eigenvalues) EXPECT_NEAR(std::abs(std::arg(z)), theta, 1e-10);
  EXPECT_NEAR(distance(predict(m, 3), trajs[0][3]), 0.0, 1e-9);
}

TEST(GroupAverage, Examples) {
  Trajectory t(1, 2, make_roles(0, 2), 2);
  t.state(0, 0, 1)[0] = 1.0;
  t.state(0, 0, 2)[1] = 1.0;
  t.state(0, 1, 1)[0] = 3.0;
  t.state(0, 1, 2)[0] = 1.0;
  t.state(0, 0, 0)[0] = 1.0;
  t.state(0, 1, 0)[0] = 1.0;
  const auto g = group_average(t, TokenRole::patch);
  ASSERT_EQ(g.size(), 1u);
  EXPECT_NEAR(g[0][0][0], std::sqrt(0.5), 1e-15);
  EXPECT_NEAR(g[0][0][1], std::sqrt(0.5), 1e-15);
  EXPECT_EQ(g[0][1][0], 1.0);
  EXPECT_THROW(group_average(t, TokenRole::reg), UsageError);
  t.state(0, 1, 2)[0] = -3.0;
  EXPECT_THROW(group_average(t, TokenRole::patch), DataError);
}

TEST(Dmd, JsonShape) {
  const auto m = fit_dmd(rotation_sequence(0.2, 5), 2);
  const auto j = to_json(m);
  EXPECT_EQ(j.at("rank"), 2);
  EXPECT_EQ(j.at("eigenvalues").size(), 2u);
  EXPECT_EQ(j.at("modes").size(), 2u);
  EXPECT_EQ(j.at("eigenvalues")[0].size(), 2u);
}
