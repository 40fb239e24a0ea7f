#pragma once

#include <cstdint>
#include <string>

namespace shortcot {

using TokenId = std::int32_t;

inline constexpr int kNumKinds = 12;
inline constexpr int kNumColors = 8;
inline constexpr int kMaxCount = 4;
inline constexpr int kNumRelations = 4;
inline constexpr int kNumCategories = 6;

inline constexpr int kGridSide = 4;
/// Scene tokens per rollout (M).
inline constexpr int kSceneLength = kGridSide * kGridSide;
/// Maximum semantic tokens per rollout, end-of-CoT marker included.
inline constexpr int kMaxSemantic = 64;

inline constexpr int kNumFillers = 30;
/// The first kNumDescriptors fillers are object descriptors, the rest are
/// generic scene words.
inline constexpr int kNumDescriptors = 10;

/// Sizes of the three token families and the model widths. Global token ids
/// are laid out as [prompt | semantic | scene]; the end-of-CoT marker is the
/// last semantic id.
struct ModelShape {
  std::uint32_t semantic_vocab = 0;
  std::uint32_t scene_vocab = 0;
  std::uint32_t prompt_vocab = 0;
  std::uint32_t embedding_dim = 16;
  std::uint32_t hidden_dim = 32;

  int total_vocab() const {
    return static_cast<int>(prompt_vocab + semantic_vocab + scene_vocab);
  }
  int state_dim() const { return 2 * static_cast<int>(embedding_dim) + 2; }
  TokenId semantic_begin() const { return static_cast<TokenId>(prompt_vocab); }
  TokenId scene_begin() const {
    return static_cast<TokenId>(prompt_vocab + semantic_vocab);
  }
  TokenId end_of_cot() const { return scene_begin() - 1; }
  bool is_prompt(TokenId t) const { return t >= 0 && t < semantic_begin(); }
  bool is_semantic(TokenId t) const {
    return t >= semantic_begin() && t < scene_begin();
  }
  bool is_scene(TokenId t) const { return t >= scene_begin() && t < total_vocab(); }

  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

/// Token alphabets of the synthetic text-to-scene task.
///
/// Prompt family (local ids): 6 category markers, 12 kinds, 8 colors, an
/// "unspecified color" token, counts 1..4, 4 relations, a "no relation" token.
/// Semantic family: 12 object words, 8 color words, 4 count words, 4 relation
/// words, 30 fillers, end-of-CoT. Scene family: one token per (kind, color)
/// plus "empty".
class Vocabulary {
 public:
  static constexpr int kPromptSize = kNumCategories + kNumKinds + kNumColors + 1 +
                                     kMaxCount + kNumRelations + 1;
  static constexpr int kSemanticSize =
      kNumKinds + kNumColors + kMaxCount + kNumRelations + kNumFillers + 1;
  static constexpr int kSceneSize = kNumKinds * kNumColors + 1;

  static ModelShape shape(std::uint32_t embedding_dim = 16, std::uint32_t hidden_dim = 32) {
    return {kSemanticSize, kSceneSize, kPromptSize, embedding_dim, hidden_dim};
  }

  // Prompt ids.
  static constexpr TokenId category_marker(int c) { return c; }
  static constexpr TokenId prompt_kind(int k) { return kNumCategories + k; }
  static constexpr TokenId prompt_color(int c) { return kNumCategories + kNumKinds + c; }
  static constexpr TokenId prompt_unspecified_color() { return prompt_color(kNumColors); }
  static constexpr TokenId prompt_count(int n) { return prompt_unspecified_color() + n; }
  static constexpr TokenId prompt_relation(int r) { return prompt_count(kMaxCount) + 1 + r; }
  static constexpr TokenId prompt_no_relation() { return prompt_relation(kNumRelations); }

  // Semantic ids (global).
  static constexpr TokenId semantic_begin() { return kPromptSize; }
  static constexpr TokenId object_word(int k) { return semantic_begin() + k; }
  static constexpr TokenId color_word(int c) { return object_word(kNumKinds) + c; }
  static constexpr TokenId count_word(int n) { return color_word(kNumColors) + n - 1; }
  static constexpr TokenId relation_word(int r) { return count_word(kMaxCount + 1) + r; }
  static constexpr TokenId filler_word(int f) { return relation_word(kNumRelations) + f; }
  static constexpr TokenId end_of_cot() { return filler_word(kNumFillers); }

  // Scene ids (global).
  static constexpr TokenId scene_begin() { return kPromptSize + kSemanticSize; }
  static constexpr TokenId scene_object(int kind, int color) {
    return scene_begin() + kind * kNumColors + color;
  }
  static constexpr TokenId scene_empty() { return scene_begin() + kNumKinds * kNumColors; }
  static constexpr TokenId total_size() { return kPromptSize + kSemanticSize + kSceneSize; }

  static constexpr bool is_scene(TokenId t) { return t >= scene_begin() && t < total_size(); }
  static constexpr int scene_kind(TokenId t) { return (t - scene_begin()) / kNumColors; }
  static constexpr int scene_color(TokenId t) { return (t - scene_begin()) % kNumColors; }

  /// Human-readable token name, for CoT dumps and diagnostics.
  static std::string token_name(TokenId t);
};

static_assert(Vocabulary::kSceneSize == 97);
static_assert(Vocabulary::end_of_cot() == Vocabulary::scene_begin() - 1);

}  // namespace shortcot
