#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "depthflow/metrics.hpp"
#include "depthflow/rng.hpp"

using namespace depthflow;

namespace {

// One sample, one cls token, 2-D states at the given angles.
Trajectory circle_trajectory(std::initializer_list<double> angles, double radius = 1.0) {
  Trajectory t(1, angles.size(), {TokenRole::cls}, 2);
  std::size_t l = 0;
  for (double a : angles) {
    t.state(0, l, 0)[0] = radius * std::cos(a);
    t.state(0, l, 0)[1] = radius * std::sin(a);
    ++l;
  }
  return t;
}

Trajectory random_trajectory(std::size_t n, std::size_t l, std::size_t reg, std::size_t patch, std::size_t d,
                             std::uint64_t seed) {
  Trajectory t(n, l, make_roles(reg, patch), d);
  Rng rng(seed);
  for (double& x : t.data()) x = rng.normal();
  return t;
}

}  // namespace

TEST(Normalize, Examples) {
  Trajectory t(1, 1, {TokenRole::cls}, 2);
  t.state(0, 0, 0)[0] = 3.0;
  t.state(0, 0, 0)[1] = 4.0;
  const auto u = normalize_states(t);
  EXPECT_EQ(u.state(0, 0, 0)[0], 0.6);
  EXPECT_EQ(u.state(0, 0, 0)[1], 0.8);
  t.state(0, 0, 0)[0] = 0.0;
  t.state(0, 0, 0)[1] = 0.0;
  EXPECT_THROW(normalize_states(t), DataError);
}

TEST(Gamma, FinalLayerIsOneAndOrthogonalIsZero) {
  const auto g = directional_convergence(circle_trajectory({0.0, std::numbers::pi / 2}));
  EXPECT_EQ(g.at(TokenRole::cls)[1], 1.0);
  EXPECT_NEAR(g.at(TokenRole::cls)[0], 0.0, 1e-15);
}

TEST(Gamma, StaticTrajectoryIsAllOnes) {
  const auto g = directional_convergence(circle_trajectory({0.3, 0.3, 0.3}, 2.0));
  for (double x : g.at(TokenRole::cls)) EXPECT_NEAR(x, 1.0, 1e-15);
}

TEST(AngularSpeed, QuarterTurnsAndStatic) {
  const double h = std::numbers::pi / 2;
  const auto s = angular_speed(circle_trajectory({0.0, h, 2 * h}));
  ASSERT_EQ(s.at(TokenRole::cls).size(), 2u);
  for (double x : s.at(TokenRole::cls)) EXPECT_NEAR(x, h, 1e-12);
  const auto still = angular_speed(circle_trajectory({1.0, 1.0}, 5.0));
  for (double x : still.at(TokenRole::cls)) EXPECT_EQ(x, 0.0);
}

TEST(AngularSpeed, GeodesicBound) {
  // Sum of per-layer angles bounds the end-to-end angle.
  const auto t = random_trajectory(1, 6, 0, 1, 5, 3);
  const auto u = normalize_states(t);
  const auto s = angular_speed(t).at(TokenRole::patch);
  double path = 0.0;
  for (double x : s) path += x;
  const double direct = std::acos(std::clamp(la::dot(u.state(0, 0, 0), u.state(0, 5, 0)), -1.0, 1.0));
  EXPECT_GE(path + 1e-12, direct);
}

TEST(ClampCosine, ToleranceBoundary) {
  EXPECT_EQ(clamp_cosine(1.0 + 5e-10), 1.0);
  EXPECT_EQ(clamp_cosine(-1.0 - 5e-10), -1.0);
  EXPECT_THROW(clamp_cosine(1.0 + 1e-8), NumericalError);
  EXPECT_THROW(clamp_cosine(NAN), NumericalError);
}

TEST(MeanNorm, PerRoleAveraging) {
  Trajectory t(2, 1, make_roles(0, 2), 1);
  t.state(0, 0, 0)[0] = 1.0;
  t.state(0, 0, 1)[0] = -3.0;
  t.state(0, 0, 2)[0] = 5.0;
  t.state(1, 0, 0)[0] = 2.0;
  t.state(1, 0, 1)[0] = 1.0;
  t.state(1, 0, 2)[0] = 1.0;
  const auto n = mean_norm(t);
  EXPECT_EQ(n.at(TokenRole::cls)[0], 1.5);
  EXPECT_EQ(n.at(TokenRole::patch)[0], (4.0 + 1.0) / 2.0);
}

TEST(Ranks, SpectrumExamples) {
  const la::Vector equal{2, 2, 2};
  const auto r = spectrum_ranks(equal);
  EXPECT_NEAR(r.stable, 3.0, 1e-12);
  EXPECT_NEAR(r.effective, 3.0, 1e-12);
  const auto one = spectrum_ranks(la::Vector{5, 0, 0});
  EXPECT_EQ(one.stable, 1.0);
  EXPECT_EQ(one.effective, 1.0);
  EXPECT_THROW(spectrum_ranks(la::Vector{0, 0}), NumericalError);
  const auto mixed = spectrum_ranks(la::Vector{3, 1});
  EXPECT_NEAR(mixed.stable, 10.0 / 9.0, 1e-12);
  EXPECT_NEAR(mixed.effective, std::exp(-(0.75 * std::log(0.75) + 0.25 * std::log(0.25))), 1e-12);
}

TEST(Ranks, RankOneUpdates) {
  // Every patch token moves from e1 to e2: one distinct update row.
  Trajectory t(2, 2, make_roles(0, 3), 3);
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t k = 0; k < 4; ++k) {
      t.state(s, 0, k)[0] = 1.0 + static_cast<double>(k);
      t.state(s, 1, k)[1] = 2.0;
    }
  const auto r = update_rank(t, 0, {TokenRole::patch});
  EXPECT_NEAR(r.stable, 1.0, 1e-12);
  EXPECT_NEAR(r.effective, 1.0, 1e-12);
  for (double bound : {r.stable, r.effective}) EXPECT_LE(bound, 3.0 + 1e-12);
  EXPECT_THROW(update_rank(t, 1, {TokenRole::patch}), UsageError);
}

TEST(Ranks, BoundedByMinDimension) {
  const auto t = random_trajectory(3, 3, 1, 4, 5, 11);
  for (std::size_t l = 0; l < 2; ++l) {
    const auto r = update_rank(t, l, {TokenRole::patch});
    EXPECT_GE(r.stable, 1.0 - 1e-12);
    EXPECT_LE(r.stable, r.effective + 1e-12);
    EXPECT_LE(r.effective, 5.0 + 1e-12);
  }
}

TEST(Coherence, ParallelUpdatesGiveOne) {
  Trajectory t(1, 2, make_roles(0, 3), 2);
  for (std::size_t k = 0; k < 4; ++k) {
    t.state(0, 0, k)[0] = 1.0;
    t.state(0, 1, k)[1] = 1.0;
  }
  EXPECT_NEAR(coherence(t, 0), 1.0, 1e-15);
}

TEST(Coherence, OpposedPatchesHaveZeroMean) {
  Trajectory t(1, 2, make_roles(0, 2), 2);
  t.state(0, 0, 0)[0] = 1.0;
  t.state(0, 1, 0)[0] = 1.0;
  t.state(0, 0, 1)[0] = 1.0;
  t.state(0, 1, 1)[1] = 1.0;
  t.state(0, 0, 2)[1] = 1.0;
  t.state(0, 1, 2)[0] = 1.0;
  EXPECT_THROW(coherence(t, 0), NumericalError);
}

TEST(Coherence, InRangeOnRandomData) {
  const auto t = random_trajectory(4, 4, 1, 6, 3, 12);
  for (std::size_t l = 0; l < 3; ++l) {
    const double k = coherence(t, l);
    EXPECT_GE(k, -1.0);
    EXPECT_LE(k, 1.0);
  }
}

TEST(TokenR2, Examples) {
  const la::Vector a{1, 2, 3, 4};
  EXPECT_NEAR(token_r2(a, a), 1.0, 1e-15);
  const la::Vector affine{3, 5, 7, 9};
  EXPECT_NEAR(token_r2(a, affine), 1.0, 1e-15);
  const la::Vector neg{-1, -2, -3, -4};
  EXPECT_NEAR(token_r2(a, neg), 1.0, 1e-15);
  const la::Vector orth{1, -1, -1, 1};
  EXPECT_NEAR(token_r2(a, orth), 0.0, 1e-15);
  EXPECT_EQ(token_r2(a, la::Vector{2, 2, 2, 2}), 1.0);
  EXPECT_EQ(token_r2(la::Vector{2, 2, 2, 2}, a), 0.0);
}

TEST(TokenR2, ScaleAndShiftInvariant) {
  Rng rng(7);
  la::Vector x(9), y(9);
  for (std::size_t i = 0; i < 9; ++i) {
    x[i] = rng.normal();
    y[i] = 0.5 * x[i] + rng.normal();
  }
  const double base = token_r2(x, y);
  la::Vector xs(9);
  for (std::size_t i = 0; i < 9; ++i) xs[i] = 7.3 * x[i] - 2.0;
  EXPECT_NEAR(token_r2(xs, y), base, 1e-12);
  EXPECT_GE(base, 0.0);
  EXPECT_LE(base, 1.0);
}

TEST(AlignmentR2, SelfIsOneAndShapeChecked) {
  const auto t = random_trajectory(2, 3, 1, 2, 4, 13);
  EXPECT_NEAR(alignment_r2(t, t, {TokenRole::patch}, 2), 1.0, 1e-12);
  const auto other = random_trajectory(2, 4, 1, 2, 4, 13);
  EXPECT_THROW(alignment_r2(t, other, {TokenRole::patch}, 1), UsageError);
  EXPECT_THROW(alignment_r2(t, t, {TokenRole::patch}, 3), UsageError);
}

TEST(DynamicsReport, RowsAndUndefinedCells) {
  const auto t = random_trajectory(2, 4, 1, 3, 3, 14);
  const auto rep = dynamics_report(t);
  EXPECT_EQ(rep.rows.size(), 4u * 3u);
  const auto speed = rep.column(TokenRole::patch, &DynamicsRow::angular_speed);
  ASSERT_EQ(speed.size(), 4u);
  EXPECT_TRUE(std::isnan(speed[3]));
  EXPECT_FALSE(std::isnan(speed[0]));
  const auto gamma = rep.column(TokenRole::cls, &DynamicsRow::gamma);
  EXPECT_EQ(gamma.back(), 1.0);
  const auto j = to_json(rep);
  EXPECT_TRUE(j.at("rows").back().at("angular_speed").is_null());
  const auto csv = to_csv(rep);
  EXPECT_EQ(csv.substr(0, csv.find('\n')).find("layer"), 0u);
}
