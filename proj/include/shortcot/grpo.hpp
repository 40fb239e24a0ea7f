#pragma once

#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "shortcot/env.hpp"
#include "shortcot/errors.hpp"
#include "shortcot/policy.hpp"

namespace shortcot {

struct GrpoConfig {
  double clip_epsilon = 0.2;
  double kl_beta = 0.01;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate() const;
};

/// One prompt, its G rollouts, their rewards and group-normalized advantages.
struct GroupBatch {
  PromptSpec prompt;
  std::vector<Rollout> rollouts;
  std::vector<RewardBreakdown> rewards;
  std::vector<double> advantages;
};

/// (R_i - mean) / std with the population std; all zeros when std < 1e-12.
std::vector<double> compute_advantages(std::span<const double> totals);

/// exp(new - old) per position.
std::vector<double> compute_ratios(std::span<const double> logprob_new,
                                   std::span<const double> logprob_old);

/// min(r A, clip(r, 1 - eps, 1 + eps) A)
template <typename Scalar>
Scalar clipped_term(Scalar ratio, Scalar advantage, Scalar epsilon) {
  const Scalar clipped = std::clamp(ratio, Scalar(1) - epsilon, Scalar(1) + epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

/// d clipped_term / d log(ratio): A r on the unclipped branch (ties included),
/// 0 where the clipped branch wins.
template <typename Scalar>
Scalar clipped_term_logratio_derivative(Scalar ratio, Scalar advantage, Scalar epsilon) {
  const Scalar clipped = std::clamp(ratio, Scalar(1) - epsilon, Scalar(1) + epsilon);
  return ratio * advantage <= clipped * advantage ? advantage * ratio : Scalar(0);
}

template <typename Scalar>
struct BasicObjective {
  Scalar value = 0;
  Scalar surrogate = 0;
  Scalar mean_kl = 0;
  /// Largest |r - 1| over all positions.
  Scalar max_ratio_deviation = 0;
  /// Ascent direction.
  BasicPolicyParams<Scalar> gradient;
};

using Objective = BasicObjective<double>;

/// Clipped surrogate averaged over all tokens of the group minus beta times
/// the per-position mean exact KL to the reference policy, with its gradient.
template <typename Scalar>
BasicObjective<Scalar> grpo_objective(const GroupBatch& batch,
                                      const BasicPolicyParams<Scalar>& params,
                                      const BasicPolicyParams<Scalar>& reference,
                                      const GrpoConfig& config) {
  if (batch.rollouts.empty()) throw ContractViolation("GRPO objective needs a non-empty group");
  if (batch.advantages.size() != batch.rollouts.size()) {
    throw ContractViolation("advantage count must equal group size");
  }
  std::size_t total_tokens = 0;
  for (const auto& r : batch.rollouts) {
    if (r.logprob_old.size() != r.length()) throw ContractViolation("rollout lacks old log-probabilities");
    total_tokens += r.length();
  }
  if (total_tokens == 0) throw ContractViolation("GRPO objective over empty rollouts");

  BasicObjective<Scalar> out;
  out.gradient = params.zeros_like();
  const Scalar norm = Scalar(1) / Scalar(total_tokens);
  const Scalar eps = Scalar(config.clip_epsilon);
  const Scalar beta = Scalar(config.kl_beta);
  Scalar surrogate = 0, kl_sum = 0;
  std::vector<Scalar> lp_weights, kl_weights;
  // Rollouts are reduced in index order so results are bit-stable.
  for (std::size_t i = 0; i < batch.rollouts.size(); ++i) {
    const Rollout& r = batch.rollouts[i];
    const Scalar adv = Scalar(batch.advantages[i]);
    SequenceTape<Scalar> tape(params, &reference, r.prompt_tokens, r.semantic_tokens, r.scene_tokens);
    const auto lp = tape.logprobs();
    const auto kl = tape.kl();
    lp_weights.assign(lp.size(), Scalar(0));
    kl_weights.assign(lp.size(), -beta * norm);
    for (std::size_t j = 0; j < lp.size(); ++j) {
      using std::exp;
      using std::abs;
      const Scalar ratio = exp(lp[j] - Scalar(r.logprob_old[j]));
      out.max_ratio_deviation = std::max(out.max_ratio_deviation, Scalar(abs(ratio - Scalar(1))));
      surrogate += clipped_term(ratio, adv, eps);
      lp_weights[j] = norm * clipped_term_logratio_derivative(ratio, adv, eps);
      kl_sum += kl[j];
    }
    tape.backward(lp_weights, beta == Scalar(0) ? std::span<const Scalar>() : kl_weights, out.gradient);
  }
  out.surrogate = surrogate * norm;
  out.mean_kl = kl_sum * norm;
  out.value = out.surrogate - beta * out.mean_kl;
  return out;
}

/// First and second moment estimates of the adaptive-moment optimizer.
struct AdamState {
  PolicyParams first_moment;
  PolicyParams second_moment;
  std::uint64_t step = 0;

  static AdamState zeros_like(const PolicyParams& params) {
    return {params.zeros_like(), params.zeros_like(), 0};
  }
};

struct UpdateResult {
  PolicyParams params;
  AdamState state;
  /// L2 norm of the applied parameter change.
  double update_norm = 0;
};

/// One bias-corrected adaptive-moment ascent step along `gradient`.
/// Throws NumericError on a non-finite gradient.
UpdateResult update_step(const PolicyParams& params, const PolicyParams& gradient,
                         const AdamState& state, const GrpoConfig& config);

}  // namespace shortcot
