#include <gtest/gtest.h>

#include <cmath>

#include "shortcot/env.hpp"
#include "shortcot/errors.hpp"
#include "shortcot/policy.hpp"
#include "support.hpp"

using namespace shortcot;
using namespace shortcot::testing;

namespace {

const ModelShape kFull = Vocabulary::shape(16, 32);

// Independent evaluator: rebuilds the state from scratch at every position
// with plain loops and takes a direct softmax.
struct NaiveModel {
  const PolicyParams& p;

  std::vector<long double> state(std::span<const TokenId> prompt, std::span<const TokenId> prefix,
                                 bool scene) const {
    const int d = static_cast<int>(p.shape.embedding_dim);
    std::vector<long double> s(2 * d + 2, 0.0L);
    for (TokenId x : prompt) {
      for (int k = 0; k < d; ++k) s[k] += p.token_embeddings(x, k) / static_cast<long double>(prompt.size());
    }
    const std::size_t n = prefix.size();
    for (std::size_t i = 0; i < n; ++i) {
      const long double w = std::pow(0.9L, static_cast<long double>(n - 1 - i));
      for (int k = 0; k < d; ++k) s[d + k] += w * p.token_embeddings(prefix[i], k);
    }
    s[2 * d] = static_cast<long double>(n) / (kMaxSemantic + kSceneLength);
    s[2 * d + 1] = scene ? 1.0L : 0.0L;
    return s;
  }

  std::vector<long double> probs(const std::vector<long double>& s, bool scene) const {
    const int h = static_cast<int>(p.shape.hidden_dim);
    std::vector<long double> hid(h);
    for (int j = 0; j < h; ++j) {
      long double a = p.hidden_bias[j];
      for (std::size_t i = 0; i < s.size(); ++i) a += s[i] * p.hidden_weights(i, j);
      hid[j] = std::tanh(a);
    }
    const int begin = scene ? p.shape.scene_begin() : p.shape.semantic_begin();
    const int end = scene ? p.shape.total_vocab() : p.shape.scene_begin();
    std::vector<long double> out(p.shape.total_vocab(), 0.0L);
    long double z = 0;
    for (int v = begin; v < end; ++v) {
      long double a = p.output_bias[v];
      for (int j = 0; j < h; ++j) a += hid[j] * p.output_weights(j, v);
      out[v] = std::exp(a);
      z += out[v];
    }
    for (int v = begin; v < end; ++v) out[v] /= z;
    return out;
  }

  /// Product of per-step probabilities, position by position.
  long double sequence_probability(const Sequence& q) const {
    std::vector<TokenId> prefix;
    long double prod = 1;
    for (TokenId t : q.semantic) {
      prod *= probs(state(q.prompt, prefix, false), false)[t];
      prefix.push_back(t);
    }
    for (TokenId t : q.scene) {
      prod *= probs(state(q.prompt, prefix, true), true)[t];
      prefix.push_back(t);
    }
    return prod;
  }
};

}  // namespace

TEST(InitParams, DeterministicAndBounded) {
  const auto a = init_params(kFull, 5);
  const auto b = init_params(kFull, 5);
  const auto c = init_params(kFull, 6);
  EXPECT_TRUE(a.identical(b));
  EXPECT_FALSE(a.identical(c));
  const auto z = init_params(kFull, 0);
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    EXPECT_LE(std::abs(z.coeff(i)), 0.05);
  }
  EXPECT_THROW(init_params(ModelShape{0, 9, 5, 3, 4}, 1), ConfigError);
}

TEST(ContextState, DecayExamples) {
  const auto p = random_params(kFull, 3);
  const int d = 16;
  const std::vector<TokenId> prompt = {0, 7, 20};
  const TokenId a = kFull.semantic_begin() + 2, b = kFull.semantic_begin() + 9;
  const std::vector<TokenId> none;
  EXPECT_TRUE(context_state(p, prompt, none, Phase::Semantic).segment(d, d).isZero(0));
  const std::vector<TokenId> one = {a};
  EXPECT_EQ(context_state(p, prompt, one, Phase::Semantic).segment(d, d),
            p.token_embeddings.row(a).transpose());
  const std::vector<TokenId> two = {a, b};
  const Vector expected = 0.9 * p.token_embeddings.row(a).transpose() + p.token_embeddings.row(b).transpose();
  EXPECT_TRUE(context_state(p, prompt, two, Phase::Semantic).segment(d, d).isApprox(expected, 1e-15));
  const Vector s = context_state(p, prompt, two, Phase::Scene);
  EXPECT_DOUBLE_EQ(s[2 * d], 2.0 / 80.0);
  EXPECT_EQ(s[2 * d + 1], 1.0);
  Vector mean = Vector::Zero(d);
  for (TokenId x : prompt) mean += p.token_embeddings.row(x).transpose();
  EXPECT_TRUE(s.head(d).isApprox(mean / 3.0, 1e-15));
}

TEST(ForwardLogits, MaskingAndNormalization) {
  const auto p = random_params(kFull, 8);
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    Vector state = Vector::NullaryExpr(kFull.state_dim(), [&] { return rng.uniform(-2, 2); });
    for (Phase phase : {Phase::Semantic, Phase::Scene}) {
      const Vector logits = forward_logits(p, state, phase);
      const double m = logits.maxCoeff();
      const Vector probs = logits.unaryExpr([m](double x) { return std::exp(x - m); });
      const double z = probs.sum();
      EXPECT_NEAR((probs / z).sum(), 1.0, 1e-12);
      for (TokenId t = 0; t < kFull.total_vocab(); ++t) {
        const bool allowed = phase == Phase::Semantic ? kFull.is_semantic(t) : kFull.is_scene(t);
        if (!allowed) {
          EXPECT_EQ(logits[t], -std::numeric_limits<double>::infinity());
          EXPECT_EQ(probs[t], 0.0);
        }
      }
    }
  }
  Vector bad = Vector::Zero(kFull.state_dim());
  bad[0] = std::nan("");
  EXPECT_THROW(forward_logits(p, bad, Phase::Scene), NumericError);
}

TEST(ForwardLogits, ZeroParamsGiveUniformPhaseDistribution) {
  const auto p = PolicyParams::zeros(kFull);
  const std::vector<TokenId> prompt = {1};
  const std::vector<TokenId> s = {kFull.end_of_cot()};
  const std::vector<TokenId> t = {kFull.scene_begin()};
  const auto lp = logprob_sequence(p, prompt, s, t);
  EXPECT_NEAR(lp[0], -std::log(59.0), 1e-14);
  EXPECT_NEAR(lp[1], -std::log(97.0), 1e-14);
}

TEST(SampleRollout, ForcedEndOfCot) {
  auto p = PolicyParams::zeros(kFull);
  p.output_bias[kFull.end_of_cot()] = 200.0;
  const auto r = sample_rollout(p, encode_prompt(PromptSpec{"x", Category::SingleObject, {{0, {}, 1}}, {}}), 4);
  ASSERT_EQ(r.semantic_tokens.size(), 1u);
  EXPECT_EQ(r.semantic_tokens[0], kFull.end_of_cot());
  EXPECT_EQ(r.length(), 17u);
}

TEST(SampleRollout, DeterministicPhaseValidAndConsistentWithScoring) {
  const auto p = random_params(kFull, 12, 0.3);
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    const auto spec = generate_prompt(kAllCategories[i % kNumCategories], rng);
    const auto prompt = encode_prompt(spec);
    const auto a = sample_rollout(p, prompt, 1000 + i);
    const auto b = sample_rollout(p, prompt, 1000 + i);
    EXPECT_EQ(a.semantic_tokens, b.semantic_tokens);
    EXPECT_EQ(a.scene_tokens, b.scene_tokens);
    EXPECT_EQ(a.logprob_new, b.logprob_new);
    ASSERT_EQ(a.scene_tokens.size(), 16u);
    ASSERT_LE(a.semantic_tokens.size(), 64u);
    if (a.semantic_tokens.size() < 64u) {
      EXPECT_EQ(a.semantic_tokens.back(), kFull.end_of_cot());
    }
    for (TokenId t : a.semantic_tokens) EXPECT_TRUE(kFull.is_semantic(t));
    for (TokenId t : a.scene_tokens) EXPECT_TRUE(kFull.is_scene(t));
    for (double lp : a.logprob_new) EXPECT_LE(lp, 0.0);
    // Teacher forcing reproduces the sampling log-probabilities bit for bit.
    EXPECT_EQ(logprob_sequence(p, prompt, a.semantic_tokens, a.scene_tokens), a.logprob_new);
  }
}

TEST(SampleRollout, UniformPolicyMatchesTruncatedGeometricMean) {
  const auto p = PolicyParams::zeros(kFull);
  const double q = 1.0 / 59.0;
  // E[min(G, S)] for G ~ Geometric(q) on {1, 2, ...}: sum_{k=0}^{S-1} (1-q)^k.
  double mean = 0, second = 0;
  for (int k = 1; k <= kMaxSemantic; ++k) {
    const double pk = k < kMaxSemantic ? std::pow(1 - q, k - 1) * q : std::pow(1 - q, kMaxSemantic - 1);
    mean += k * pk;
    second += double(k) * k * pk;
  }
  double closed = 0;
  for (int k = 0; k < kMaxSemantic; ++k) closed += std::pow(1 - q, k);
  EXPECT_NEAR(mean, closed, 1e-9);
  const double sd = std::sqrt(second - mean * mean);

  const std::vector<TokenId> prompt = {0, 6, 18, 26, 27, 35};
  double total = 0;
  const int n = 1000;
  for (int i = 0; i < n; ++i) total += sample_rollout(p, prompt, 77'000 + i).semantic_tokens.size();
  EXPECT_LT(std::abs(total / n - mean), 3 * sd / std::sqrt(double(n)));
}

TEST(LogprobSequence, SequentialProductOracle) {
  Rng rng(41);
  for (int c = 0; c < 20; ++c) {
    const auto p = random_params(kFull, 100 + c, 0.2);
    const auto q = random_sequence(kFull, rng, rng.uniform_int(2, 8), rng.uniform_int(0, 10), 16);
    const auto lp = logprob_sequence(p, q.prompt, q.semantic, q.scene);
    double sum = 0;
    for (double v : lp) sum += v;
    const long double prod = NaiveModel{p}.sequence_probability(q);
    EXPECT_NEAR(std::exp(sum), static_cast<double>(prod), 1e-10 * std::max(1.0, static_cast<double>(prod)));
    EXPECT_NEAR(sum, static_cast<double>(std::log(prod)), 1e-9);
  }
}

TEST(LogprobSequence, OutOfPhaseTokenIsContractViolation) {
  const auto p = random_params(kFull, 1);
  const std::vector<TokenId> prompt = {0};
  const std::vector<TokenId> s = {kFull.scene_begin()};
  const std::vector<TokenId> t = {kFull.scene_begin()};
  EXPECT_THROW(logprob_sequence(p, prompt, s, t), ContractViolation);
}

TEST(GradLogprob, LinearInWeightsAndZeroForZeroWeights) {
  const auto p = random_params(kFull, 9, 0.3);
  Rng rng(3);
  const auto q = random_sequence(kFull, rng, 5, 6, 16);
  std::vector<double> w(q.semantic.size() + q.scene.size());
  for (auto& x : w) x = rng.uniform(-1, 1);
  std::vector<double> w2 = w, zero(w.size(), 0.0);
  for (auto& x : w2) x *= 2;
  const auto g = grad_logprob_sum<double>(p, q.prompt, q.semantic, q.scene, w);
  const auto g2 = grad_logprob_sum<double>(p, q.prompt, q.semantic, q.scene, w2);
  const auto g0 = grad_logprob_sum<double>(p, q.prompt, q.semantic, q.scene, zero);
  EXPECT_EQ(g0.squared_norm(), 0.0);
  for (Eigen::Index i = 0; i < g.size(); ++i) EXPECT_EQ(g2.coeff(i), 2 * g.coeff(i));
  w[0] = std::numeric_limits<double>::infinity();
  EXPECT_THROW((grad_logprob_sum<double>(p, q.prompt, q.semantic, q.scene, w)), NumericError);
}

TEST(GradLogprob, FiniteDifferencesEveryCoordinateTinyModel) {
  const ModelShape shape = tiny_shape();
  Rng rng(11);
  for (int c = 0; c < 5; ++c) {
    const auto p = random_params(shape, 200 + c);
    const auto q = random_sequence(shape, rng, 3, rng.uniform_int(0, 5), rng.uniform_int(1, 6), c == 4);
    std::vector<double> w(q.semantic.size() + q.scene.size());
    for (auto& x : w) x = rng.uniform(-1, 1);
    const auto g = grad_logprob_sum<double>(p, q.prompt, q.semantic, q.scene, w);
    const auto f = [&](const LongParams& lp) {
      return sum_weighted(logprob_sequence(lp, q.prompt, q.semantic, q.scene), w);
    };
    EXPECT_LT(max_fd_error(p, g, f, all_coords(p)), 1e-4) << "instance " << c;
  }
}

TEST(GradLogprob, FiniteDifferencesSampledCoordinatesFullModel) {
  Rng rng(12);
  for (int c = 0; c < 3; ++c) {
    const auto p = random_params(kFull, 300 + c, 0.3);
    const auto q = random_sequence(kFull, rng, 6, rng.uniform_int(3, 12), 16);
    std::vector<double> w(q.semantic.size() + q.scene.size());
    for (auto& x : w) x = rng.uniform(-1, 1);
    const auto g = grad_logprob_sum<double>(p, q.prompt, q.semantic, q.scene, w);
    const auto f = [&](const LongParams& lp) {
      return sum_weighted(logprob_sequence(lp, q.prompt, q.semantic, q.scene), w);
    };
    EXPECT_LT(max_fd_error(p, g, f, sampled_coords(g, rng, 150, 50)), 1e-4) << "instance " << c;
  }
}

TEST(KlExact, IdentityNonNegativityAndDirectSum) {
  Rng rng(13);
  const auto a = random_params(kFull, 400, 0.3);
  const auto q = random_sequence(kFull, rng, 4, 5, 16);
  for (double v : kl_exact(a, a, q.prompt, q.semantic, q.scene)) EXPECT_EQ(v, 0.0);

  for (int c = 0; c < 100; ++c) {
    const auto pa = random_params(tiny_shape(), 500 + c);
    const auto pb = random_params(tiny_shape(), 900 + c);
    const auto s = random_sequence(tiny_shape(), rng, 2, rng.uniform_int(0, 4), 3);
    for (double v : kl_exact(pa, pb, s.prompt, s.semantic, s.scene)) EXPECT_GE(v, 0.0);
  }

  const auto b = random_params(kFull, 401, 0.3);
  const auto kl = kl_exact(a, b, q.prompt, q.semantic, q.scene);
  NaiveModel na{a}, nb{b};
  std::vector<TokenId> prefix;
  std::vector<TokenId> all = q.semantic;
  all.insert(all.end(), q.scene.begin(), q.scene.end());
  for (std::size_t j = 0; j < all.size(); ++j) {
    const bool scene = j >= q.semantic.size();
    const auto pp = na.probs(na.state(q.prompt, prefix, scene), scene);
    const auto qq = nb.probs(nb.state(q.prompt, prefix, scene), scene);
    long double direct = 0;
    for (std::size_t v = 0; v < pp.size(); ++v) {
      if (pp[v] > 0) direct += pp[v] * std::log(pp[v] / qq[v]);
    }
    EXPECT_NEAR(kl[j], static_cast<double>(direct), 1e-10);
    prefix.push_back(all[j]);
  }
}

TEST(KlExact, GradientFiniteDifferences) {
  const ModelShape shape = tiny_shape();
  Rng rng(14);
  for (int c = 0; c < 5; ++c) {
    const auto pa = random_params(shape, 600 + c);
    const auto pb = random_params(shape, 700 + c);
    const auto q = random_sequence(shape, rng, 3, rng.uniform_int(0, 5), rng.uniform_int(1, 6));
    std::vector<double> w(q.semantic.size() + q.scene.size());
    for (auto& x : w) x = rng.uniform(-1, 1);
    const auto g = grad_kl_sum<double>(pa, pb, q.prompt, q.semantic, q.scene, w);
    const auto pb_long = pb.cast<long double>();
    const auto f = [&](const LongParams& lp) {
      return sum_weighted(kl_exact(lp, pb_long, q.prompt, q.semantic, q.scene), w);
    };
    EXPECT_LT(max_fd_error(pa, g, f, all_coords(pa)), 1e-4) << "instance " << c;
  }
}
