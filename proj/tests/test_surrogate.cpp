#include <cmath>

#include <gtest/gtest.h>

#include "depthflow/checkpoint.hpp"
#include "depthflow/surrogate.hpp"
#include "depthflow/synthetic.hpp"

using namespace depthflow;

namespace {

Trajectory small_teacher(std::uint64_t seed = 3, std::size_t samples = 3) {
  auto spec = teacher_spec_from_json(nlohmann::json::parse(R"({
    "dim": 3, "registers": 1, "patches": 2, "schedule": [2, 2], "noise_sigma": 0.05,
    "blocks": [{"family": "affine", "init": "random", "gain": 0.4},
               {"family": "gated-mlp", "init": "random", "hidden": 4}]})"));
  spec.seed = seed;
  return generate_teacher(spec, samples).first;
}

SurrogateModel random_model(BlockFamily family, bool depth_scale, std::uint64_t seed) {
  Rng rng(seed);
  SurrogateModel m;
  m.schedule = Partition::from_schedule({2, 2});
  m.dim = 3;
  m.n_tokens = 4;
  for (int j = 0; j < 2; ++j) {
    auto b = random_block(family, 3, 4, 0.5, rng);
    if (depth_scale) {
      b.enable_depth_scale(4);
      for (double& x : b.depth_scale.data()) x = rng.uniform(0.5, 1.5);
    }
    m.blocks.push_back(b);
  }
  m.validate();
  return m;
}

std::vector<std::span<double>> arrays(BlockParams& b) {
  std::vector<std::span<double>> out;
  b.for_each_array([&](std::span<double> s) { out.push_back(s); });
  return out;
}

void expect_gradients_match(SurrogateModel m, const Trajectory& teacher, double lambda, double wd) {
  const std::size_t samples[] = {0, 1, 2};
  const TokenWeights w{0.5, 0.2, 0.3};
  auto r = hybrid_loss(m, teacher, samples, lambda, w, wd);
  for (std::size_t j = 0; j < m.blocks.size(); ++j) {
    auto params = arrays(m.blocks[j]);
    auto grads = arrays(r.grads[j]);
    for (std::size_t a = 0; a < params.size(); ++a)
      for (std::size_t i = 0; i < params[a].size(); ++i) {
        const double keep = params[a][i], h = 1e-6;
        params[a][i] = keep + h;
        const double up = hybrid_loss(m, teacher, samples, lambda, w, wd, 1, 0, false).loss;
        params[a][i] = keep - h;
        const double down = hybrid_loss(m, teacher, samples, lambda, w, wd, 1, 0, false).loss;
        params[a][i] = keep;
        const double fd = (up - down) / (2 * h);
        EXPECT_NEAR(grads[a][i], fd, 1e-6 * std::max(1.0, std::abs(fd)))
            << "block " << j << " array " << a << " index " << i << " lambda " << lambda;
      }
  }
}

TrainConfig quick_config(Stage stage, std::size_t steps) {
  TrainConfig c;
  c.stage = stage;
  c.steps = steps;
  c.learning_rate = 1e-3;
  c.momentum = 0.5;
  c.weight_decay = 0.0;
  c.seed = 11;
  return c;
}

}  // namespace

TEST(HybridLoss, GradientsMatchFiniteDifferences) {
  const auto teacher = small_teacher();
  for (auto family : {BlockFamily::affine, BlockFamily::gated_mlp})
    for (bool scale : {false, true})
      for (double lambda : {0.0, 0.5, 1.0}) expect_gradients_match(random_model(family, scale, 7), teacher, lambda, 1e-2);
}

TEST(HybridLoss, LambdaEndpointsSelectTerms) {
  const auto teacher = small_teacher();
  const auto m = random_model(BlockFamily::gated_mlp, false, 8);
  const TokenWeights w;
  const auto one = hybrid_loss(m, teacher, 0, 1.0, w);
  const auto zero = hybrid_loss(m, teacher, 0, 0.0, w);
  EXPECT_DOUBLE_EQ(one.loss, one.tf);
  EXPECT_DOUBLE_EQ(zero.loss, zero.ar);
  EXPECT_GT(zero.ar, 0.0);
  const auto half = hybrid_loss(m, teacher, 0, 0.5, w);
  EXPECT_NEAR(half.loss, 0.5 * one.tf + 0.5 * zero.ar, 1e-12);
  EXPECT_THROW(hybrid_loss(m, teacher, 0, 1.5, w), UsageError);
}

TEST(HybridLoss, OneLayerChainMakesTfEqualAr) {
  const auto teacher = small_teacher();
  const auto m = random_model(BlockFamily::affine, false, 9);
  const std::size_t s[] = {0, 1};
  const auto r = hybrid_loss(m, teacher, s, 0.5, TokenWeights{}, 0.0, 3, 3);
  EXPECT_DOUBLE_EQ(r.tf, r.ar);
}

TEST(HybridLoss, PerfectModelHasZeroLossAndGradient) {
  auto spec = teacher_spec_from_json(nlohmann::json::parse(R"({
    "dim": 3, "registers": 0, "patches": 2, "schedule": [3, 2], "seed": 4,
    "blocks": [{"family": "affine", "init": "random", "gain": 0.3},
               {"family": "gated-mlp", "init": "random", "hidden": 5}]})"));
  const auto [teacher, p] = generate_teacher(spec, 2);
  SurrogateModel m{spec.blocks, p, 3, 3};
  const auto r = hybrid_loss(m, teacher, 1, 0.3, TokenWeights{});
  EXPECT_EQ(r.loss, 0.0);
  for (const auto& g : r.grads)
    g.for_each_array([](std::span<const double> s) {
      for (double x : s) EXPECT_EQ(x, 0.0);
    });
  const auto trained = train_stage2(m, teacher, quick_config(Stage::stage2, 20));
  EXPECT_EQ(trained, m);
}

TEST(HybridLoss, ZeroTokenWeightIgnoresThatRole) {
  auto teacher = small_teacher();
  const auto m = random_model(BlockFamily::affine, false, 10);
  const TokenWeights cls_only{1.0, 0.0, 0.0};
  const double before = hybrid_loss(m, teacher, 0, 0.5, cls_only).loss;
  for (std::size_t l = 1; l <= 4; ++l)
    for (double& x : teacher.state(0, l, 3)) x += 1.0;
  EXPECT_EQ(hybrid_loss(m, teacher, 0, 0.5, cls_only).loss, before);
  EXPECT_NE(hybrid_loss(m, teacher, 0, 0.5, TokenWeights{}).loss, before);
}

TEST(HybridLoss, WeightDecayCoversUsedBlocksOnly) {
  const auto teacher = small_teacher();
  const auto m = random_model(BlockFamily::gated_mlp, false, 12);
  const std::size_t s[] = {0};
  const auto r = hybrid_loss(m, teacher, s, 0.5, TokenWeights{}, 0.2, 1, 2);
  double sq = 0.0;
  for (double x : m.blocks[0].w1.data()) sq += x * x;
  for (double x : m.blocks[0].w2.data()) sq += x * x;
  EXPECT_NEAR(r.omega, 0.1 * sq, 1e-12);
}

TEST(TrainConfig, LambdaSchedule) {
  TrainConfig c;
  c.steps = 100;
  EXPECT_EQ(c.lambda_at(0), 0.5);
  EXPECT_EQ(c.lambda_at(25), 0.0);
  EXPECT_EQ(c.lambda_at(90), 0.0);
  EXPECT_NEAR(c.lambda_at(10), 0.5 * (1 - 10.0 / 25.0), 1e-15);
  c.anneal = false;
  c.lambda_initial = 1.0;
  EXPECT_EQ(c.lambda_at(99), 1.0);
}

TEST(TrainConfig, ValidationAndDefaults) {
  TrainConfig s2;
  s2.stage = Stage::stage2;
  EXPECT_EQ(s2.lambda0(), 0.0);
  EXPECT_EQ(s2.weights().reg, 0.10);
  EXPECT_NO_THROW(s2.validate());
  s2.lambda_initial = 0.5;
  EXPECT_THROW(s2.validate(), UsageError);
  TrainConfig bad;
  bad.token_weights = TokenWeights{0.5, 0.5, 0.5};
  EXPECT_THROW(bad.validate(), UsageError);
  bad.token_weights.reset();
  bad.momentum = 1.0;
  EXPECT_THROW(bad.validate(), UsageError);
  bad.momentum = 0.0;
  bad.learning_rate = 0.0;
  EXPECT_THROW(bad.validate(), UsageError);
}

TEST(Training, ZeroStepsReturnsInitialModel) {
  const auto teacher = small_teacher();
  const auto p = Partition::from_schedule({2, 2});
  const auto m = train_stage1(teacher, p, quick_config(Stage::stage1, 0));
  EXPECT_EQ(m, init_model({}, 3, 4, p, 11));
}

TEST(Training, Stage1ReducesErrorAndIsDeterministic) {
  const auto teacher = small_teacher(5, 8);
  const auto p = Partition::from_schedule({2, 2});
  std::vector<TrainLogRow> rows;
  const auto cfg = quick_config(Stage::stage1, 300);
  const auto m = train_stage1(teacher, p, cfg, {BlockFamily::gated_mlp, 8, false},
                              [&](const TrainLogRow& r) { rows.push_back(r); });
  ASSERT_FALSE(rows.empty());
  EXPECT_EQ(rows.front().layer_error.size(), 4u);
  const auto init = init_model({BlockFamily::gated_mlp, 8, false}, 3, 4, p, cfg.seed);
  EXPECT_LT(relative_errors(m, teacher).back(), relative_errors(init, teacher).back());
  EXPECT_EQ(m, train_stage1(teacher, p, cfg, {BlockFamily::gated_mlp, 8, false}));
}

TEST(Training, Stage2ReducesAutoregressiveLoss) {
  const auto teacher = small_teacher(6, 8);
  const auto p = Partition::from_schedule({2, 2});
  const auto m1 = train_stage1(teacher, p, quick_config(Stage::stage1, 200));
  const auto m2 = train_stage2(m1, teacher, quick_config(Stage::stage2, 200));
  const auto s = detail::all_samples(teacher);
  const TokenWeights w{0.45, 0.10, 0.45};
  EXPECT_LE(hybrid_loss(m2, teacher, s, 0.0, w, 0.0, 1, 0, false).loss,
            hybrid_loss(m1, teacher, s, 0.0, w, 0.0, 1, 0, false).loss);
}

TEST(Training, DivergenceIsNumericalError) {
  const auto teacher = small_teacher();
  auto cfg = quick_config(Stage::stage1, 500);
  cfg.learning_rate = 50.0;
  EXPECT_THROW(train_stage1(teacher, Partition::from_schedule({2, 2}), cfg), NumericalError);
}

TEST(Evaluation, RelativeErrorsAndCosines) {
  const auto teacher = small_teacher();
  const auto m = random_model(BlockFamily::affine, false, 13);
  const auto e = relative_errors(m, teacher);
  ASSERT_EQ(e.size(), 5u);
  EXPECT_EQ(e[0], 0.0);
  const auto c = layer_cosines(teacher, teacher);
  for (double x : c) EXPECT_NEAR(x, 1.0, 1e-12);
}

TEST(Perturbation, ZeroEpsilonAndFinalLayer) {
  const auto teacher = small_teacher();
  const auto m = random_model(BlockFamily::gated_mlp, false, 14);
  const auto zero = perturb_rollout(m, teacher.layer(0, 0), teacher.roles(), 2, 0.0, 1);
  for (const auto& [role, v] : zero.d_cos) EXPECT_NEAR(v, 0.0, 1e-15);
  for (const auto& [role, v] : zero.scaled) EXPECT_EQ(v, 0.0);
  const auto last = perturb_rollout(m, teacher.layer(0, 0), teacher.roles(), 4, 1e-3, 1);
  EXPECT_GT(last.d_cos.at(TokenRole::patch), 0.0);
  EXPECT_THROW(perturb_rollout(m, teacher.layer(0, 0), teacher.roles(), 5, 1e-3, 1), UsageError);
}

TEST(Perturbation, IdentityStackKeepsScaledSensitivityConstant) {
  LayerMaps maps;
  maps.maps.assign(5, BlockParams::identity(3));
  const auto teacher = small_teacher();
  Trajectory inputs(3, 6, teacher.roles(), 3);
  for (std::size_t s = 0; s < 3; ++s) std::ranges::copy(teacher.layer(s, 0), inputs.layer(s, 0).begin());
  const double first = mean_sensitivity(maps, inputs, 0, 1e-4, 2).at(TokenRole::patch);
  for (std::size_t l = 1; l <= 5; ++l)
    EXPECT_NEAR(mean_sensitivity(maps, inputs, l, 1e-4, 2).at(TokenRole::patch), first, 1e-12);
}

TEST(LayerSwap, SelfSwapIsExact) {
  const auto teacher = small_teacher();
  const auto m = random_model(BlockFamily::gated_mlp, false, 15);
  LayerMaps maps = LayerMaps::expand(m.blocks, m.schedule);
  const LayerSwap self[] = {{3, 3}};
  EXPECT_EQ(final_layer_error(apply_swaps(maps, self), maps, teacher), 0.0);
  const LayerSwap bad[] = {{0, 1}};
  EXPECT_THROW(apply_swaps(maps, bad), UsageError);
}

TEST(LayerSwap, TiedStackIntraIsZeroInterIsNot) {
  const auto teacher = small_teacher();
  const auto m = random_model(BlockFamily::gated_mlp, false, 16);
  const auto maps = LayerMaps::expand(m.blocks, m.schedule);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    EXPECT_EQ(layer_swap_eval(maps, m.schedule, 2, SwapMode::intra, teacher, seed), 0.0);
    EXPECT_GT(layer_swap_eval(maps, m.schedule, 2, SwapMode::inter, teacher, seed), 0.0);
  }
  EXPECT_THROW(layer_swap_eval(maps, Partition::from_schedule({1, 3}), 4, SwapMode::intra, teacher, 0),
               UsageError);
}

TEST(Checkpoint, RoundTripIsExact) {
  for (auto family : {BlockFamily::affine, BlockFamily::gated_mlp})
    for (bool scale : {false, true}) {
      const auto m = random_model(family, scale, 17);
      const auto bytes = encode_checkpoint(m, 42, {{"note", "x"}});
      const auto ck = decode_checkpoint(bytes);
      EXPECT_EQ(ck.model, m);
      EXPECT_EQ(ck.seed, 42u);
      EXPECT_EQ(ck.header.at("extra").at("note"), "x");
      auto truncated = bytes;
      truncated.pop_back();
      EXPECT_THROW(decode_checkpoint(truncated), DataError);
      auto trailing = bytes;
      trailing.push_back(0);
      EXPECT_THROW(decode_checkpoint(trailing), DataError);
    }
  const std::string junk = "{\"format\":\"other\"}\n";
  EXPECT_THROW(decode_checkpoint(std::vector<unsigned char>(junk.begin(), junk.end())), DataError);
}
