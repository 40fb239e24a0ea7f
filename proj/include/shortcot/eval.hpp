#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "shortcot/env.hpp"
#include "shortcot/penalties.hpp"
#include "shortcot/policy.hpp"

namespace shortcot {

/// model_sum rescaled from [1.06, 2.12] to [0, 1].
double task_score(double model_sum);

/// One prompt under one seed.
struct EvalRecord {
  std::size_t prompt_index = 0;
  std::string prompt_id;
  Category category = Category::SingleObject;
  std::uint64_t seed = 0;
  int cot_length = 0;
  double detection = 0;
  double alignment = 0;
  double preference = 0;
  double model_sum = 0;
  double score = 0;
  /// Semantic plus scene tokens generated for the image.
  int total_tokens = 0;
};

struct GroupStats {
  std::string name;
  std::size_t n = 0;
  double score_mean = 0;
  double model_sum_mean = 0;
  double cot_length_mean = 0;
  double cot_length_std = 0;
  double tokens_mean = 0;
};

struct EvalReport {
  std::vector<GroupStats> categories;  // suite category order
  GroupStats overall;
  std::uint64_t semantic_tokens = 0;
  std::uint64_t scene_tokens = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> prompt_ids;
  bool use_cot = true;
  std::vector<EvalRecord> records;  // prompt-major, then seed
};

/// Per-prompt, per-seed rollout. Without CoT the end-of-CoT marker is forced
/// first and the scene phase sees the prompt alone; both arms draw scene
/// tokens from the same stream. Throws DataError on a vocabulary mismatch.
EvalReport evaluate(const PolicyParams& params, std::span<const PromptSpec> suite,
                    std::span<const std::uint64_t> seeds, bool use_cot,
                    std::optional<int> cap_length = std::nullopt);

/// Aggregates raw records (population statistics).
EvalReport aggregate(std::vector<EvalRecord> records, std::span<const PromptSpec> suite,
                     std::span<const std::uint64_t> seeds, bool use_cot);

std::uint64_t eval_rollout_seed(std::uint64_t seed, std::size_t prompt_index);

struct LengthHistogram {
  std::vector<std::size_t> counts;  // bins 0..kMaxSemantic
  std::size_t n = 0;
  double mean = 0;
  double median = 0;
  /// m3 / m2^1.5; 0 when the variance is 0.
  double skewness = 0;
};

LengthHistogram length_histogram(std::span<const int> lengths);

/// Seed-wise mean and population std of one prompt's length and score.
struct PromptSeedStats {
  std::string prompt_id;
  double length_mean = 0;
  double length_std = 0;
  double score_mean = 0;
  double score_std = 0;
};

std::vector<PromptSeedStats> per_prompt_stats(const EvalReport& report);

inline constexpr std::array<const char*, 4> kCorrelationVariables = {"Length_AVG", "Length_Std",
                                                                     "Score_AVG", "Score_Std"};

struct CorrelationMatrix {
  Eigen::Matrix4d values = Eigen::Matrix4d::Identity();
  /// Variables with zero variance; their off-diagonal entries are 0.
  std::array<bool, 4> zero_variance{};
};

/// Pearson coefficients over prompts; needs at least 3 prompts.
CorrelationMatrix pearson_matrix(std::span<const PromptSeedStats> stats);

struct NecessityRow {
  std::string attribute;
  std::size_t favor_cot = 0;
  std::size_t favor_no_cot = 0;
  std::size_t ties = 0;
  /// favor_cot / favor_no_cot; empty when favor_no_cot == 0 ("all-favor-CoT").
  std::optional<double> ratio;
};

/// Attributes a prompt carries: its category plus "color", "count",
/// "relation" when specified.
std::vector<std::string> prompt_attributes(const PromptSpec& spec);

/// Compares seed-paired model_sum with and without CoT.
std::vector<NecessityRow> necessity_from_reports(const EvalReport& with_cot,
                                                 const EvalReport& without_cot,
                                                 std::span<const PromptSpec> suite);
std::vector<NecessityRow> cot_necessity(const PolicyParams& params, std::span<const PromptSpec> suite,
                                        std::span<const std::uint64_t> seeds,
                                        std::optional<int> cap_length = std::nullopt);

double reduction_percent(double baseline, double treated);

struct CostReport {
  double baseline_cot_length = 0;
  double treated_cot_length = 0;
  double cot_reduction_percent = 0;
  double baseline_tokens = 0;
  double treated_tokens = 0;
  double token_reduction_percent = 0;
};

/// Throws ContractViolation unless both reports cover the same suite and seeds.
CostReport cost_report(const EvalReport& baseline, const EvalReport& treated);

// CSV emitters. Reals are written with round-trip precision. The labelled
// writers emit rows only; their headers are below.
inline constexpr const char* kHistogramCsvHeader = "label,cot_length,count";
inline constexpr const char* kPearsonCsvHeader =
    "label,variable,Length_AVG,Length_Std,Score_AVG,Score_Std,status";
inline constexpr const char* kNecessityCsvHeader = "label,attribute,favor_cot,favor_no_cot,ties,ratio";

std::string format_real(double x);
void write_report_csv(std::ostream& out, const EvalReport& report);
void write_records_csv(std::ostream& out, const EvalReport& report);
void write_histogram_csv(std::ostream& out, const LengthHistogram& h, const std::string& label);
void write_pearson_csv(std::ostream& out, const CorrelationMatrix& m, const std::string& label);
void write_necessity_csv(std::ostream& out, std::span<const NecessityRow> rows, const std::string& label);

/// Minimal CSV reader for the files above (no quoting).
std::vector<std::vector<std::string>> read_csv(std::istream& in);

}  // namespace shortcot
