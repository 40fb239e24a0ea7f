#pragma once

// Shared fixtures for the unit tests and the acceptance runner: small random
// instances and a long double central-difference oracle.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "shortcot/grpo.hpp"
#include "shortcot/policy.hpp"
#include "shortcot/random.hpp"

namespace shortcot::testing {

/// A shape small enough to difference every coordinate.
inline ModelShape tiny_shape() { return ModelShape{7, 9, 5, 3, 4}; }

/// init_params rescaled so logits are far from uniform.
inline PolicyParams random_params(const ModelShape& shape, std::uint64_t seed, double scale = 1.0) {
  PolicyParams p = init_params(shape, seed);
  p *= scale / kInitRange;
  return p;
}

struct Sequence {
  std::vector<TokenId> prompt;
  std::vector<TokenId> semantic;
  std::vector<TokenId> scene;
};

/// Random phase-valid (prompt, s, t). s ends with end-of-CoT unless it is
/// exactly `max_semantic` tokens long and `truncated` is set.
inline Sequence random_sequence(const ModelShape& shape, Rng& rng, int prompt_len, int content_len,
                                int scene_len, bool truncated = false) {
  Sequence q;
  for (int i = 0; i < prompt_len; ++i) {
    q.prompt.push_back(rng.uniform_int(0, static_cast<int>(shape.prompt_vocab) - 1));
  }
  for (int i = 0; i < content_len; ++i) {
    q.semantic.push_back(rng.uniform_int(shape.semantic_begin(), shape.end_of_cot() - 1));
  }
  if (!truncated) q.semantic.push_back(shape.end_of_cot());
  for (int i = 0; i < scene_len; ++i) {
    q.scene.push_back(rng.uniform_int(shape.scene_begin(), shape.total_vocab() - 1));
  }
  return q;
}

/// |a - b| / max(|a|, |b|), or |a - b| when both are below 1e-8.
inline double relative_error(double analytic, double numeric) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  if (scale < 1e-8) return std::abs(analytic - numeric);
  return std::abs(analytic - numeric) / scale;
}

using LongParams = BasicPolicyParams<long double>;

/// Central differences of f at `params` (evaluated in long double) for the
/// listed coordinates; returns the worst relative error against `analytic`.
inline double max_fd_error(const PolicyParams& params, const PolicyParams& analytic,
                           const std::function<long double(const LongParams&)>& f,
                           const std::vector<Eigen::Index>& coords, double step = 1e-5) {
  LongParams p = params.cast<long double>();
  double worst = 0;
  for (Eigen::Index i : coords) {
    const long double saved = p.coeff(i);
    p.coeff(i) = saved + step;
    const long double up = f(p);
    p.coeff(i) = saved - step;
    const long double down = f(p);
    p.coeff(i) = saved;
    const double numeric = static_cast<double>((up - down) / (2.0L * step));
    worst = std::max(worst, relative_error(analytic.coeff(i), numeric));
  }
  return worst;
}

inline std::vector<Eigen::Index> all_coords(const PolicyParams& p) {
  std::vector<Eigen::Index> out(static_cast<std::size_t>(p.size()));
  for (Eigen::Index i = 0; i < p.size(); ++i) out[static_cast<std::size_t>(i)] = i;
  return out;
}

/// `count` coordinates drawn uniformly plus the `top` largest-magnitude
/// analytic entries.
inline std::vector<Eigen::Index> sampled_coords(const PolicyParams& analytic, Rng& rng, int count, int top) {
  std::vector<Eigen::Index> out;
  for (int i = 0; i < count; ++i) out.push_back(rng.uniform_int(0, static_cast<int>(analytic.size()) - 1));
  std::vector<Eigen::Index> order = all_coords(analytic);
  std::partial_sort(order.begin(), order.begin() + top, order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return std::abs(analytic.coeff(a)) > std::abs(analytic.coeff(b));
  });
  out.insert(out.end(), order.begin(), order.begin() + top);
  return out;
}

inline long double sum_weighted(const std::vector<long double>& v, const std::vector<double>& w) {
  long double s = 0;
  for (std::size_t j = 0; j < v.size(); ++j) s += static_cast<long double>(w[j]) * v[j];
  return s;
}

/// A group over one prompt with old log-probabilities from `old_params`
/// (a perturbed copy, so ratios differ from 1) and random advantages.
inline GroupBatch random_batch(const ModelShape& shape, const PolicyParams& old_params, Rng& rng, int group,
                               int prompt_len = 3) {
  GroupBatch b;
  const Sequence head = random_sequence(shape, rng, prompt_len, 0, 0);
  std::vector<double> totals;
  for (int i = 0; i < group; ++i) {
    Sequence q = random_sequence(shape, rng, 0, rng.uniform_int(0, 4), rng.uniform_int(1, 4));
    Rollout r;
    r.prompt_tokens = head.prompt;
    r.semantic_tokens = q.semantic;
    r.scene_tokens = q.scene;
    r.logprob_old = logprob_sequence(old_params, r.prompt_tokens, r.semantic_tokens, r.scene_tokens);
    r.logprob_new = r.logprob_old;
    b.rollouts.push_back(std::move(r));
    totals.push_back(rng.uniform(1.06, 2.12));
  }
  b.advantages = compute_advantages(totals);
  return b;
}

}  // namespace shortcot::testing
