#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "shortcot/env.hpp"
#include "shortcot/policy.hpp"

namespace shortcot {

/// CoT-shortening strategies. `none` is the unpenalized baseline.
enum class Strategy { None, Cap, Target, Hard, Soft };

std::string_view strategy_name(Strategy s);
/// Throws ConfigError listing the valid names.
Strategy parse_strategy(std::string_view name);

/// Per-model gates of the hard variant; f = 1 only when every score exceeds
/// its threshold. Defaults sit at the middle of each score's range.
struct HardThresholds {
  double detection = 0.8;
  double alignment = 0.5;
  double preference = 0.29;
};

struct PenaltyConfig {
  Strategy strategy = Strategy::None;
  double alpha = 0.0;
  int target_length = 35;
  int cap_length = 35;
  HardThresholds thresholds;

  /// 5e-4 for soft and target, 1e-3 for hard, 0 otherwise.
  static double default_alpha(Strategy s);
  static PenaltyConfig defaults(Strategy s);
  void validate() const;
};

/// Semantic tokens excluding the end-of-CoT marker.
int cot_length(const Rollout& rollout);
int cot_length(std::span<const TokenId> semantic_tokens);

/// Keeps the first n content tokens and closes the CoT with an end-of-CoT
/// marker when the content is longer than n; otherwise returns the input.
std::vector<TokenId> apply_cap(std::span<const TokenId> semantic_tokens, int n);

/// -alpha * max(0, length - target)
double penalty_target(int length, int target, double alpha);
/// -alpha * length when every score is strictly above its gate, else 0.
double penalty_hard(const RewardBreakdown& rewards, const HardThresholds& gates, int length,
                    double alpha);
/// -alpha * (model_sum - 1) * length; model_sum < 1 is a contract violation.
double penalty_soft(double model_sum, int length, double alpha);

/// Attaches the strategy's length penalty; total = model_sum + penalty.
RewardBreakdown total_reward(RewardBreakdown rewards, const Rollout& rollout,
                             const PenaltyConfig& config);

/// How a rollout's CoT is produced: optionally capped at n content tokens,
/// or skipped entirely (end-of-CoT forced as the first token).
struct RolloutOptions {
  std::optional<int> cap_length;
  bool skip_cot = false;

  static RolloutOptions for_strategy(const PenaltyConfig& config) {
    RolloutOptions o;
    if (config.strategy == Strategy::Cap) o.cap_length = config.cap_length;
    return o;
  }
};

/// Samples one rollout; the cap truncates the CoT before the scene phase
/// conditions on it.
Rollout generate_rollout(const PolicyParams& params, std::span<const TokenId> prompt,
                         std::uint64_t seed, const RolloutOptions& options);

}  // namespace shortcot
