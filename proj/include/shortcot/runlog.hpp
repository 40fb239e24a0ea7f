#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "shortcot/vocabulary.hpp"

namespace shortcot {

struct RolloutLog {
  int cot_length = 0;
  double detection = 0;
  double alignment = 0;
  double preference = 0;
  double model_sum = 0;
  double length_penalty = 0;
  double total = 0;
  /// Token sequences are only kept for the first step of each epoch.
  std::vector<TokenId> semantic_tokens;
  std::vector<TokenId> scene_tokens;
};

/// One optimization step. Wall time is kept out of this record (see
/// TimingLog) so logs of identical runs compare byte for byte.
struct RunLogRecord {
  int epoch = 0;
  std::uint64_t step = 0;
  std::string prompt_id;
  std::string category;
  std::string strategy;
  int group_size = 0;
  std::vector<RolloutLog> rollouts;
  double advantage_mean = 0;
  double advantage_std = 0;
  double objective = 0;
  double mean_kl = 0;
  double update_norm = 0;
  double max_ratio_deviation = 0;

  double mean_cot_length() const;
  double mean_model_sum() const;
};

std::string to_json_line(const RunLogRecord& record);
RunLogRecord parse_json_line(const std::string& line);

/// Serialized append-only writer; every record is flushed as one line.
class RunLogWriter {
 public:
  RunLogWriter(const std::filesystem::path& path, bool append);
  void append(const RunLogRecord& record);

 private:
  std::ofstream out_;
};

std::vector<RunLogRecord> read_run_log(const std::filesystem::path& path);

/// Per-epoch averages over every rollout logged in that epoch.
struct EpochSummary {
  int epoch = 0;
  int group_size = 0;
  double mean_cot_length = 0;
  double mean_model_sum = 0;
  double mean_total = 0;
  double mean_length_penalty = 0;
  double mean_kl = 0;
};

std::vector<EpochSummary> summarize_epochs(const std::vector<RunLogRecord>& records);

/// Rollout-weighted means over the last `epochs` epochs present in the log.
struct WindowStats {
  double mean_cot_length = 0;
  double mean_model_sum = 0;
  std::size_t rollouts = 0;
};
WindowStats final_window(const std::vector<RunLogRecord>& records, int epochs);

}  // namespace shortcot
