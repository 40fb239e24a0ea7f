#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "shortcot/checkpoint.hpp"
#include "shortcot/env.hpp"
#include "shortcot/grpo.hpp"
#include "shortcot/penalties.hpp"
#include "shortcot/policy.hpp"

namespace shortcot {

/// Inclusive epoch range sharing one group size.
struct ScheduleEntry {
  int first_epoch = 1;
  int last_epoch = 1;
  int group_size = 4;

  friend bool operator==(const ScheduleEntry&, const ScheduleEntry&) = default;
};

/// "1-600:4,601-800:3"
std::vector<ScheduleEntry> parse_schedule(const std::string& text);
std::string format_schedule(const std::vector<ScheduleEntry>& schedule);

struct PretrainConfig {
  int steps = 2000;
  int batch_size = 8;
  double learning_rate = 2e-2;
};

struct TrainConfig {
  int total_epochs = 800;
  std::vector<ScheduleEntry> rollout_schedule = {{1, 600, 4}, {601, 800, 3}};
  int prompts_per_epoch = 24;
  std::uint64_t seed = 1;
  GrpoConfig grpo;
  PenaltyConfig penalty;
  PretrainConfig pretrain;
  int checkpoint_interval = 100;
  std::filesystem::path output_dir = "run";
  /// Keep rollout token sequences for the first step of every epoch.
  bool log_tokens = true;

  /// Checks that the schedule partitions 1..total_epochs with groups >= 2.
  void validate() const;
  int group_size_for(int epoch) const;
};

// Seed derivation paths under the master seed.
inline constexpr std::uint64_t kSeedInit = 1;
inline constexpr std::uint64_t kSeedPretrain = 2;
inline constexpr std::uint64_t kSeedPrompt = 3;
inline constexpr std::uint64_t kSeedRollout = 4;

std::uint64_t prompt_seed(std::uint64_t master, int epoch, int index);
std::uint64_t rollout_seed(std::uint64_t master, int epoch, int index, int rollout);
/// Category of the index-th prompt of an epoch (round robin).
Category epoch_category(int index);

/// Supervised target of the verbose prior: a padded CoT that mentions every
/// object twice with descriptors, closed by end-of-CoT, then a canonical
/// scene layout that satisfies the prompt.
struct VerboseTarget {
  std::vector<TokenId> semantic;
  std::vector<TokenId> scene;
};

inline constexpr int kVerboseMinContent = 48;
inline constexpr int kVerboseMaxContent = 62;

VerboseTarget make_verbose_target(const PromptSpec& spec, Rng& rng);
/// The layout part of the target; colors of unspecified objects are drawn from rng.
std::vector<TokenId> canonical_scene(const PromptSpec& spec, Rng& rng);

/// Maximum-likelihood steps on verbose targets for random prompts.
PolicyParams pretrain_verbose(PolicyParams params, const PretrainConfig& config, std::uint64_t seed);

/// Fresh parameters for the standard vocabulary and the configured widths.
PolicyParams initial_params(std::uint64_t seed, std::uint32_t embedding_dim = 16,
                            std::uint32_t hidden_dim = 32);

/// initial_params followed by pretrain_verbose, both keyed by the master seed.
PolicyParams verbose_prior(std::uint64_t seed, const PretrainConfig& config, std::uint32_t embedding_dim = 16,
                           std::uint32_t hidden_dim = 32);

struct TrainOptions {
  /// Continue from a checkpoint that carries a training state.
  std::optional<Checkpoint> resume;
  /// Written verbatim to config.snapshot when non-empty.
  std::string config_snapshot;
};

struct TrainResult {
  Checkpoint final_state;
  std::filesystem::path final_checkpoint;
};

/// GRPO fine-tuning with the configured length strategy. The reference
/// policy is frozen at `initial`. Writes log.jsonl, timing.jsonl,
/// ckpt_<epoch>.bin and final.bin into config.output_dir.
TrainResult train(const TrainConfig& config, const PolicyParams& initial,
                  const TrainOptions& options = {});

}  // namespace shortcot
