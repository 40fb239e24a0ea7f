#include <gtest/gtest.h>

#include <cmath>

#include "shortcot/errors.hpp"
#include "shortcot/grpo.hpp"
#include "support.hpp"

using namespace shortcot;
using namespace shortcot::testing;

TEST(Advantages, Examples) {
  EXPECT_EQ(compute_advantages(std::vector<double>{2, 2, 2, 2}), std::vector<double>(4, 0.0));
  const auto a = compute_advantages(std::vector<double>{1, 3});
  EXPECT_DOUBLE_EQ(a[0], -1.0);
  EXPECT_DOUBLE_EQ(a[1], 1.0);
  EXPECT_THROW(compute_advantages(std::vector<double>{1.0}), ContractViolation);
}

TEST(Advantages, NormalizedOverRandomGroups) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> r(rng.uniform_int(2, 8));
    for (auto& x : r) x = rng.uniform(1.0, 2.2);
    const auto a = compute_advantages(r);
    double mean = 0, var = 0;
    for (double x : a) mean += x;
    mean /= a.size();
    for (double x : a) var += (x - mean) * (x - mean);
    EXPECT_LT(std::abs(mean), 1e-9);
    EXPECT_NEAR(std::sqrt(var / a.size()), 1.0, 1e-9);
  }
}

TEST(Advantages, ScaleAndShiftInvariant) {
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> r(4), s(4);
    const double scale = rng.uniform(0.1, 10), shift = rng.uniform(-5, 5);
    for (int k = 0; k < 4; ++k) {
      r[k] = rng.uniform(1, 2);
      s[k] = scale * r[k] + shift;
    }
    const auto a = compute_advantages(r), b = compute_advantages(s);
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(a[k], b[k], 1e-9);
  }
}

TEST(Ratios, Examples) {
  const std::vector<double> old = {-1.0, -2.0, -0.5};
  EXPECT_EQ(compute_ratios(old, old), std::vector<double>(3, 1.0));
  std::vector<double> shifted = old;
  shifted[1] += std::log(2.0);
  EXPECT_NEAR(compute_ratios(shifted, old)[1], 2.0, 1e-15);
  shifted[0] = std::nan("");
  EXPECT_THROW(compute_ratios(shifted, old), NumericError);
  EXPECT_THROW(compute_ratios(std::vector<double>{1.0}, old), ContractViolation);
}

TEST(ClippedTerm, Examples) {
  EXPECT_DOUBLE_EQ(clipped_term(1.5, 1.0, 0.2), 1.2);
  EXPECT_DOUBLE_EQ(clipped_term(1.5, -1.0, 0.2), -1.5);
  for (double a : {-2.0, -0.3, 0.0, 0.7, 3.0}) {
    for (double eps : {0.05, 0.2, 0.5}) EXPECT_EQ(clipped_term(1.0, a, eps), a);
  }
  // Clipped branch has zero slope; unclipped branch slope A r.
  EXPECT_EQ(clipped_term_logratio_derivative(1.5, 1.0, 0.2), 0.0);
  EXPECT_EQ(clipped_term_logratio_derivative(1.5, -1.0, 0.2), -1.5);
  EXPECT_EQ(clipped_term_logratio_derivative(0.5, 1.0, 0.2), 0.5);
  EXPECT_EQ(clipped_term_logratio_derivative(0.5, -1.0, 0.2), 0.0);
}

TEST(Objective, VanishesWithZeroAdvantagesAndBeta) {
  const ModelShape shape = tiny_shape();
  Rng rng(3);
  const auto p = random_params(shape, 10);
  GroupBatch b = random_batch(shape, p, rng, 3);
  b.advantages.assign(3, 0.0);
  GrpoConfig cfg;
  cfg.kl_beta = 0;
  const auto obj = grpo_objective(b, p, p, cfg);
  EXPECT_EQ(obj.value, 0.0);
  EXPECT_EQ(obj.gradient.squared_norm(), 0.0);
}

TEST(Objective, OnSnapshotEqualsTokenWeightedAdvantage) {
  const ModelShape shape = tiny_shape();
  Rng rng(4);
  const auto p = random_params(shape, 11);
  const GroupBatch b = random_batch(shape, p, rng, 4);
  GrpoConfig cfg;
  cfg.kl_beta = 0;
  const auto obj = grpo_objective(b, p, p, cfg);
  double num = 0, den = 0;
  for (std::size_t i = 0; i < b.rollouts.size(); ++i) {
    num += b.rollouts[i].length() * b.advantages[i];
    den += b.rollouts[i].length();
  }
  EXPECT_NEAR(obj.value, num / den, 1e-15);
  EXPECT_EQ(obj.max_ratio_deviation, 0.0);
  EXPECT_EQ(obj.mean_kl, 0.0);
}

TEST(Objective, EmptyGroupIsContractViolation) {
  const auto p = random_params(tiny_shape(), 1);
  EXPECT_THROW(grpo_objective(GroupBatch{}, p, p, GrpoConfig{}), ContractViolation);
}

TEST(Objective, FiniteDifferencesWithPerturbedOldPolicy) {
  const ModelShape shape = tiny_shape();
  Rng rng(5);
  int checked = 0;
  for (int c = 0; checked < 5 && c < 50; ++c) {
    const auto params = random_params(shape, 20 + c);
    PolicyParams old_params = params;
    old_params.axpy(1.0, random_params(shape, 90 + c, 0.15));
    const auto reference = random_params(shape, 50 + c);
    const GroupBatch batch = random_batch(shape, old_params, rng, 2);
    GrpoConfig cfg;
    cfg.kl_beta = 0.05;
    const auto obj = grpo_objective(batch, params, reference, cfg);
    // Central differences straddling a clip boundary are not comparable.
    bool near_kink = false;
    for (const auto& r : batch.rollouts) {
      const auto lp = logprob_sequence(params, r.prompt_tokens, r.semantic_tokens, r.scene_tokens);
      for (std::size_t j = 0; j < lp.size(); ++j) {
        const double ratio = std::exp(lp[j] - r.logprob_old[j]);
        near_kink |= std::abs(ratio - 0.8) < 1e-3 || std::abs(ratio - 1.2) < 1e-3;
      }
    }
    if (near_kink) continue;
    const auto ref_long = reference.cast<long double>();
    const auto f = [&](const LongParams& lp) { return grpo_objective(batch, lp, ref_long, cfg).value; };
    EXPECT_LT(max_fd_error(params, obj.gradient, f, all_coords(params)), 1e-4) << "instance " << c;
    EXPECT_GT(obj.max_ratio_deviation, 0.2);  // some positions sit on the clipped branch
    ++checked;
  }
  EXPECT_EQ(checked, 5);
}

TEST(Objective, RewardAffineTransformLeavesObjectiveUnchanged) {
  const ModelShape shape = tiny_shape();
  Rng rng(6);
  const auto p = random_params(shape, 30);
  GroupBatch b = random_batch(shape, p, rng, 4);
  std::vector<double> totals = {1.2, 1.9, 1.5, 2.05};
  b.advantages = compute_advantages(totals);
  const auto o1 = grpo_objective(b, p, p, GrpoConfig{});
  for (auto& t : totals) t = 3.0 * t - 1.0;
  b.advantages = compute_advantages(totals);
  const auto o2 = grpo_objective(b, p, p, GrpoConfig{});
  EXPECT_NEAR(o1.value, o2.value, 1e-12);
  for (Eigen::Index i = 0; i < o1.gradient.size(); ++i) {
    EXPECT_NEAR(o1.gradient.coeff(i), o2.gradient.coeff(i), 1e-12);
  }
}

TEST(UpdateStep, ZeroGradientKeepsParamsAndDecaysMoments) {
  const auto p = random_params(tiny_shape(), 7);
  AdamState s = AdamState::zeros_like(p);
  s.first_moment.output_bias.setConstant(0.5);
  s.second_moment.output_bias.setConstant(0.25);
  s.step = 3;
  GrpoConfig cfg;
  const auto r = update_step(p, p.zeros_like(), s, cfg);
  EXPECT_TRUE(r.params.token_embeddings == p.token_embeddings);
  EXPECT_TRUE(r.params.hidden_weights == p.hidden_weights);
  EXPECT_DOUBLE_EQ(r.state.first_moment.output_bias[0], 0.45);
  EXPECT_DOUBLE_EQ(r.state.second_moment.output_bias[0], 0.25 * 0.999);
  EXPECT_EQ(r.state.step, 4u);
}

TEST(UpdateStep, DeterministicAndRejectsNonFinite) {
  const auto p = random_params(tiny_shape(), 8);
  PolicyParams g = random_params(tiny_shape(), 9);
  const AdamState s = AdamState::zeros_like(p);
  const auto a = update_step(p, g, s, GrpoConfig{});
  const auto b = update_step(p, g, s, GrpoConfig{});
  EXPECT_TRUE(a.params.identical(b.params));
  EXPECT_TRUE(a.state.second_moment.identical(b.state.second_moment));
  g.hidden_bias[0] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(update_step(p, g, s, GrpoConfig{}), NumericError);
}

TEST(UpdateStep, ScalarQuadraticHandComputation) {
  // Ascent on f(x) = -(x - 3)^2 from x = 0: gradient 6, first bias-corrected
  // step moves by exactly lr * 6 / (6 + eps') with eps' = 1e-8.
  const ModelShape shape{1, 1, 1, 1, 1};
  PolicyParams p = PolicyParams::zeros(shape);
  PolicyParams g = p.zeros_like();
  g.output_bias[0] = 6.0;
  GrpoConfig cfg;
  cfg.learning_rate = 0.1;
  const auto r = update_step(p, g, AdamState::zeros_like(p), cfg);
  EXPECT_NEAR(r.params.output_bias[0], 0.1 * 6.0 / (6.0 + 1e-8), 1e-15);
  EXPECT_GT(r.params.output_bias[0], 0.0);
  EXPECT_NEAR(r.update_norm, r.params.output_bias[0], 1e-15);

  double x = 0;
  AdamState s = AdamState::zeros_like(p);
  for (int i = 0; i < 200; ++i) {
    PolicyParams cur = p;
    cur.output_bias[0] = x;
    PolicyParams grad = p.zeros_like();
    grad.output_bias[0] = -2 * (x - 3);
    auto step = update_step(cur, grad, s, cfg);
    x = step.params.output_bias[0];
    s = std::move(step.state);
  }
  EXPECT_NEAR(x, 3.0, 0.1);
}
