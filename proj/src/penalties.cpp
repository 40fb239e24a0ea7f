#include "shortcot/penalties.hpp"

#include <algorithm>
#include <array>
#include <string>

#include "shortcot/errors.hpp"

namespace shortcot {

namespace {
constexpr std::array<std::string_view, 5> kStrategyNames = {"none", "cap", "target", "hard", "soft"};
}

std::string_view strategy_name(Strategy s) { return kStrategyNames[static_cast<int>(s)]; }

Strategy parse_strategy(std::string_view name) {
  for (std::size_t i = 0; i < kStrategyNames.size(); ++i) {
    if (kStrategyNames[i] == name) return static_cast<Strategy>(i);
  }
  throw ConfigError("unknown strategy '" + std::string(name) +
                    "'; valid strategies: none, cap, target, hard, soft");
}

double PenaltyConfig::default_alpha(Strategy s) {
  switch (s) {
    case Strategy::Soft: return 5e-4;
    case Strategy::Hard: return 1e-3;
    case Strategy::Target: return 5e-4;
    default: return 0.0;
  }
}

PenaltyConfig PenaltyConfig::defaults(Strategy s) {
  PenaltyConfig c;
  c.strategy = s;
  c.alpha = default_alpha(s);
  return c;
}

void PenaltyConfig::validate() const {
  if (!(alpha >= 0)) throw ConfigError("penalty.alpha must be >= 0");
  if (strategy == Strategy::Cap && cap_length < 1) throw ConfigError("penalty.cap_length must be >= 1");
  if (strategy == Strategy::Target && target_length < 0) {
    throw ConfigError("penalty.target_length must be >= 0");
  }
  if (strategy == Strategy::Hard) {
    const auto within = [](double t, double lo, double hi) { return t >= lo && t <= hi; };
    if (!within(thresholds.detection, kDetectionLow, kDetectionHigh) ||
        !within(thresholds.alignment, kAlignmentLow, kAlignmentHigh) ||
        !within(thresholds.preference, kPreferenceLow, kPreferenceHigh)) {
      throw ConfigError("hard thresholds must lie inside their reward ranges");
    }
  }
}

int cot_length(std::span<const TokenId> semantic_tokens) {
  return static_cast<int>(std::count_if(semantic_tokens.begin(), semantic_tokens.end(),
                                        [](TokenId t) { return t != Vocabulary::end_of_cot(); }));
}

int cot_length(const Rollout& rollout) { return cot_length(rollout.semantic_tokens); }

std::vector<TokenId> apply_cap(std::span<const TokenId> semantic_tokens, int n) {
  if (n < 1) throw ContractViolation("cap length must be >= 1");
  std::vector<TokenId> out(semantic_tokens.begin(), semantic_tokens.end());
  std::size_t content = out.size();
  if (!out.empty() && out.back() == Vocabulary::end_of_cot()) --content;
  if (content > static_cast<std::size_t>(n)) {
    out.resize(n);
    out.push_back(Vocabulary::end_of_cot());
  }
  return out;
}

double penalty_target(int length, int target, double alpha) {
  return -alpha * std::max(0, length - target);
}

double penalty_hard(const RewardBreakdown& rewards, const HardThresholds& gates, int length,
                    double alpha) {
  const bool easy = rewards.detection > gates.detection && rewards.alignment > gates.alignment &&
                    rewards.preference > gates.preference;
  return easy ? -alpha * length : 0.0;
}

double penalty_soft(double model_sum, int length, double alpha) {
  if (model_sum < 1.0) {
    throw ContractViolation("soft penalty needs model_sum >= 1, got " + std::to_string(model_sum));
  }
  return -alpha * (model_sum - 1.0) * length;
}

RewardBreakdown total_reward(RewardBreakdown rewards, const Rollout& rollout,
                             const PenaltyConfig& config) {
  const int length = cot_length(rollout);
  switch (config.strategy) {
    case Strategy::None:
    case Strategy::Cap: rewards.length_penalty = 0.0; break;
    case Strategy::Target:
      rewards.length_penalty = penalty_target(length, config.target_length, config.alpha);
      break;
    case Strategy::Hard:
      rewards.length_penalty = penalty_hard(rewards, config.thresholds, length, config.alpha);
      break;
    case Strategy::Soft:
      rewards.length_penalty = penalty_soft(rewards.model_sum, length, config.alpha);
      break;
    default: throw ConfigError("unknown strategy");
  }
  rewards.total = rewards.model_sum + rewards.length_penalty;
  return rewards;
}

Rollout generate_rollout(const PolicyParams& params, std::span<const TokenId> prompt,
                         std::uint64_t seed, const RolloutOptions& options) {
  RolloutStreams streams(seed);
  SemanticDraft draft;
  if (options.skip_cot) {
    draft.tokens = {params.shape.end_of_cot()};
  } else if (options.cap_length) {
    const int n = *options.cap_length;
    // n + 1 draws decide whether the cap binds; later draws would be discarded.
    draft = sample_semantic(params, prompt, streams.semantic, n + 1);
    draft.tokens = apply_cap(draft.tokens, n);
    draft.logprobs.resize(std::min(draft.logprobs.size(), static_cast<std::size_t>(n)));
  } else {
    draft = sample_semantic(params, prompt, streams.semantic);
  }
  return complete_rollout(params, prompt, std::move(draft), streams.scene, seed);
}

}  // namespace shortcot
