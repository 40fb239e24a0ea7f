#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "shortcot/trainer.hpp"

namespace shortcot {

inline constexpr const char* kToolVersion = "1.0.0";

/// Flat `key = value` text with dotted namespaces; `#` starts a comment.
class FlatConfig {
 public:
  static FlatConfig parse(const std::string& text, const std::string& origin = "<string>");
  /// Throws ConfigError naming the path when the file cannot be read.
  static FlatConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

struct EvalSettings {
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4};
  std::uint64_t suite_seed = 2024;
  int per_category = 20;
};

/// Every tunable with its final value; serialized verbatim as config.snapshot.
struct ResolvedConfig {
  TrainConfig train;
  EvalSettings eval;
  std::uint32_t embedding_dim = 16;
  std::uint32_t hidden_dim = 32;
  std::string init_checkpoint;
  bool fresh_start = false;

  std::string snapshot() const;
};

/// Defaults, then file values, then overrides. Unknown keys are a
/// ConfigError naming the key. penalty.alpha falls back to the strategy's
/// default, and the rollout schedule to the 4-then-3 split truncated to
/// train.total_epochs.
ResolvedConfig resolve_config(const FlatConfig& file, const FlatConfig& overrides = {});

std::vector<std::uint64_t> parse_seed_list(const std::string& text);
std::string format_seed_list(const std::vector<std::uint64_t>& seeds);
std::vector<ScheduleEntry> default_schedule(int total_epochs);

}  // namespace shortcot
