#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "shortcot/random.hpp"
#include "shortcot/vocabulary.hpp"

namespace shortcot {

enum class Category { SingleObject, TwoObjects, Counting, Colors, ColorAttr, Position };
enum class Relation { LeftOf, RightOf, Above, Below };

inline constexpr std::array<Category, kNumCategories> kAllCategories = {
    Category::SingleObject, Category::TwoObjects, Category::Counting,
    Category::Colors,       Category::ColorAttr,  Category::Position};

std::string_view category_name(Category c);
/// Throws ConfigError on unknown names.
Category parse_category(std::string_view name);
std::string_view relation_name(Relation r);
Relation parse_relation(std::string_view name);
std::string_view kind_name(int kind);
std::string_view color_name(int color);

struct ObjectRequest {
  int kind = 0;
  std::optional<int> color;
  int count = 1;

  friend bool operator==(const ObjectRequest&, const ObjectRequest&) = default;
};

/// Symbolic scene request that doubles as verifiable ground truth.
struct PromptSpec {
  std::string id;
  Category category = Category::SingleObject;
  std::vector<ObjectRequest> objects;
  std::optional<Relation> relation;

  friend bool operator==(const PromptSpec&, const PromptSpec&) = default;
};

/// Checks every category invariant; throws ContractViolation with the reason.
void validate(const PromptSpec& spec);

PromptSpec generate_prompt(Category category, Rng& rng);
PromptSpec generate_prompt(std::string_view category, Rng& rng);

/// Layout: category marker, then (kind, color-or-unspecified, count) per
/// object, then relation-or-none.
std::vector<TokenId> encode_prompt(const PromptSpec& spec);
/// Inverse of encode_prompt up to the id field (left empty).
PromptSpec decode_prompt(std::span<const TokenId> tokens);

/// 4x4 grid of global scene-token ids, row-major; row 0 is the top.
using SceneGrid = Eigen::Matrix<TokenId, kGridSide, kGridSide, Eigen::RowMajor>;

struct Scene {
  SceneGrid grid;

  TokenId cell(int i) const { return grid(i / kGridSide, i % kGridSide); }
  int occupied() const;
  int count_kind(int kind) const;
  int count_kind_color(int kind, int color) const;
};

/// Throws ContractViolation on wrong length or a non-scene token.
Scene decode_scene(std::span<const TokenId> tokens);

double reward_detection(const Scene& scene, const PromptSpec& spec);
double reward_alignment(const Scene& scene, const PromptSpec& spec);
double reward_preference(const Scene& scene);

inline constexpr double kDetectionLow = 0.6, kDetectionHigh = 1.0;
inline constexpr double kAlignmentLow = 0.2, kAlignmentHigh = 0.8;
inline constexpr double kPreferenceLow = 0.26, kPreferenceHigh = 0.32;
inline constexpr double kModelSumLow = 1.06, kModelSumHigh = 2.12;

struct RewardBreakdown {
  double detection = 0;
  double alignment = 0;
  double preference = 0;
  double model_sum = 0;
  double length_penalty = 0;
  double total = 0;
};

/// Fills the three scores and model_sum; penalty zero, total = model_sum.
RewardBreakdown reward_ensemble(const Scene& scene, const PromptSpec& spec);

/// Deterministic suite; counts are indexed by kAllCategories order.
std::vector<PromptSpec> benchmark_suite(const std::array<int, kNumCategories>& counts,
                                        std::uint64_t seed);

// Line format: id|category|kind:color:count,...|relation
std::string format_prompt_line(const PromptSpec& spec);
PromptSpec parse_prompt_line(std::string_view line);
void write_suite(std::ostream& out, std::span<const PromptSpec> suite);
std::vector<PromptSpec> read_suite(std::istream& in);

}  // namespace shortcot
