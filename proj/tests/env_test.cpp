#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "shortcot/env.hpp"
#include "shortcot/errors.hpp"

using namespace shortcot;

namespace {

std::vector<TokenId> random_scene_tokens(Rng& rng, double fill) {
  std::vector<TokenId> t(kSceneLength, Vocabulary::scene_empty());
  for (auto& x : t) {
    if (rng.uniform() < fill) {
      x = Vocabulary::scene_object(rng.uniform_int(0, kNumKinds - 1), rng.uniform_int(0, kNumColors - 1));
    }
  }
  return t;
}

PromptSpec random_spec(Rng& rng) {
  return generate_prompt(kAllCategories[rng.uniform_int(0, kNumCategories - 1)], rng);
}

}  // namespace

TEST(Vocabulary, SizesAndDisjointRanges) {
  EXPECT_EQ(Vocabulary::kSceneSize, 97);
  const ModelShape s = Vocabulary::shape(16, 32);
  EXPECT_EQ(s.total_vocab(), 36 + 59 + 97);
  EXPECT_TRUE(s.is_semantic(s.end_of_cot()));
  EXPECT_FALSE(s.is_scene(s.end_of_cot()));
  EXPECT_EQ(Vocabulary::end_of_cot(), s.end_of_cot());
  int eoc = 0;
  for (TokenId t = 0; t < s.total_vocab(); ++t) {
    EXPECT_EQ(int(s.is_prompt(t)) + int(s.is_semantic(t)) + int(s.is_scene(t)), 1);
    eoc += t == s.end_of_cot();
  }
  EXPECT_EQ(eoc, 1);
}

TEST(GeneratePrompt, CategoryInvariants) {
  Rng r7(7), r3(3), r11(11);
  const auto single = generate_prompt(Category::SingleObject, r7);
  ASSERT_EQ(single.objects.size(), 1u);
  EXPECT_EQ(single.objects[0].count, 1);

  const auto counting = generate_prompt(Category::Counting, r3);
  ASSERT_EQ(counting.objects.size(), 1u);
  EXPECT_GE(counting.objects[0].count, 2);
  EXPECT_LE(counting.objects[0].count, 4);

  const auto position = generate_prompt(Category::Position, r11);
  EXPECT_EQ(position.objects.size(), 2u);
  ASSERT_TRUE(position.relation.has_value());

  Rng rng(5);
  for (int i = 0; i < 2000; ++i) EXPECT_NO_THROW(validate(random_spec(rng)));
}

TEST(GeneratePrompt, PureFunctionOfRngState) {
  for (auto c : kAllCategories) {
    Rng a(99), b(99);
    const auto x = generate_prompt(c, a);
    const auto y = generate_prompt(c, b);
    EXPECT_EQ(format_prompt_line(x), format_prompt_line(y));
  }
}

TEST(GeneratePrompt, UnknownCategoryIsConfigError) {
  Rng rng(1);
  EXPECT_THROW(generate_prompt("sculpture", rng), ConfigError);
}

TEST(EncodePrompt, UnspecifiedColorToken) {
  Rng rng(2);
  const auto spec = generate_prompt(Category::TwoObjects, rng);
  const auto enc = encode_prompt(spec);
  EXPECT_EQ(std::count(enc.begin(), enc.end(), Vocabulary::prompt_unspecified_color()), 2);
}

TEST(EncodePrompt, RoundTripThousandSpecs) {
  Rng rng(17);
  for (int i = 0; i < 1000; ++i) {
    const auto spec = random_spec(rng);
    const auto back = decode_prompt(encode_prompt(spec));
    EXPECT_EQ(back.category, spec.category);
    EXPECT_EQ(back.objects, spec.objects);
    EXPECT_EQ(back.relation, spec.relation);
  }
}

TEST(EncodePrompt, InjectiveOverRandomPairs) {
  Rng rng(23);
  for (int i = 0; i < 10000; ++i) {
    const auto a = random_spec(rng);
    const auto b = random_spec(rng);
    const bool same_spec = a.category == b.category && a.objects == b.objects && a.relation == b.relation;
    EXPECT_EQ(same_spec, encode_prompt(a) == encode_prompt(b));
  }
}

TEST(DecodeScene, RowMajorAndTotal) {
  std::vector<TokenId> empty(kSceneLength, Vocabulary::scene_empty());
  EXPECT_EQ(decode_scene(empty).occupied(), 0);
  Rng rng(4);
  const auto t = random_scene_tokens(rng, 0.5);
  const Scene s = decode_scene(t);
  for (int i = 0; i < kSceneLength; ++i) EXPECT_EQ(s.cell(i), t[i]);
  EXPECT_THROW(decode_scene(std::span(t).first(15)), ContractViolation);
  auto bad = t;
  bad[3] = Vocabulary::end_of_cot();
  EXPECT_THROW(decode_scene(bad), ContractViolation);
}

TEST(Rewards, DetectionExamples) {
  PromptSpec two{"x", Category::TwoObjects, {{0, std::nullopt, 1}, {1, std::nullopt, 1}}, std::nullopt};
  std::vector<TokenId> t(kSceneLength, Vocabulary::scene_empty());
  EXPECT_DOUBLE_EQ(reward_detection(decode_scene(t), two), 0.6);
  t[0] = Vocabulary::scene_object(0, 3);
  EXPECT_DOUBLE_EQ(reward_detection(decode_scene(t), two), 0.8);
  t[5] = Vocabulary::scene_object(1, 2);
  EXPECT_DOUBLE_EQ(reward_detection(decode_scene(t), two), 1.0);
  t[6] = Vocabulary::scene_object(1, 2);  // two instances where one was requested
  EXPECT_DOUBLE_EQ(reward_detection(decode_scene(t), two), 0.8);
}

TEST(Rewards, AlignmentExamples) {
  std::vector<TokenId> t(kSceneLength, Vocabulary::scene_empty());
  PromptSpec plain{"x", Category::SingleObject, {{4, std::nullopt, 1}}, std::nullopt};
  EXPECT_DOUBLE_EQ(reward_alignment(decode_scene(t), plain), 0.8);

  PromptSpec attr{"x", Category::ColorAttr, {{0, 1, 1}, {2, 3, 1}}, std::nullopt};
  t[0] = Vocabulary::scene_object(0, 5);
  t[1] = Vocabulary::scene_object(2, 5);
  EXPECT_DOUBLE_EQ(reward_alignment(decode_scene(t), attr), 0.2);
  t[0] = Vocabulary::scene_object(0, 1);
  EXPECT_NEAR(reward_alignment(decode_scene(t), attr), 0.5, 1e-15);
}

TEST(Rewards, RelationUsesStrictCentroids) {
  PromptSpec pos{"x", Category::Position, {{0, std::nullopt, 1}, {1, std::nullopt, 1}}, Relation::LeftOf};
  std::vector<TokenId> t(kSceneLength, Vocabulary::scene_empty());
  t[0] = Vocabulary::scene_object(0, 0);
  t[1] = Vocabulary::scene_object(1, 0);
  EXPECT_DOUBLE_EQ(reward_alignment(decode_scene(t), pos), 0.8);
  pos.relation = Relation::RightOf;
  EXPECT_NEAR(reward_alignment(decode_scene(t), pos), 0.2 + 0.6 * 2.0 / 3.0, 1e-15);
  pos.relation = Relation::Above;  // same row: tie on the vertical axis fails
  EXPECT_NEAR(reward_alignment(decode_scene(t), pos), 0.2 + 0.6 * 2.0 / 3.0, 1e-15);
  t[1] = Vocabulary::scene_empty();
  t[4] = Vocabulary::scene_object(1, 0);
  EXPECT_DOUBLE_EQ(reward_alignment(decode_scene(t), pos), 0.8);
}

TEST(Rewards, PreferenceExamples) {
  std::vector<TokenId> t(kSceneLength, Vocabulary::scene_empty());
  EXPECT_DOUBLE_EQ(reward_preference(decode_scene(t)), 0.32);
  for (int i = 0; i < 12; ++i) t[i] = Vocabulary::scene_object(0, 0);
  EXPECT_NEAR(reward_preference(decode_scene(t)), 0.29, 1e-15);
  for (auto& x : t) x = Vocabulary::scene_object(0, 0);
  EXPECT_DOUBLE_EQ(reward_preference(decode_scene(t)), 0.26);
}

TEST(Rewards, EnsembleExtremes) {
  PromptSpec spec{"x", Category::Colors, {{3, 2, 1}}, std::nullopt};
  std::vector<TokenId> t(kSceneLength, Vocabulary::scene_empty());
  t[0] = Vocabulary::scene_object(3, 2);
  const auto best = reward_ensemble(decode_scene(t), spec);
  EXPECT_NEAR(best.model_sum, 2.12, 1e-15);
  EXPECT_EQ(best.length_penalty, 0.0);
  EXPECT_EQ(best.total, best.model_sum);
  for (auto& x : t) x = Vocabulary::scene_object(5, 0);
  const auto worst = reward_ensemble(decode_scene(t), spec);
  EXPECT_NEAR(worst.model_sum, 1.06, 1e-15);
}

TEST(Rewards, RangesOverRandomPairs) {
  Rng rng(31);
  for (int i = 0; i < 10000; ++i) {
    const auto spec = random_spec(rng);
    const auto r = reward_ensemble(decode_scene(random_scene_tokens(rng, rng.uniform())), spec);
    EXPECT_GE(r.detection, 0.6);
    EXPECT_LE(r.detection, 1.0);
    EXPECT_GE(r.alignment, 0.2);
    EXPECT_LE(r.alignment, 0.8);
    EXPECT_GE(r.preference, 0.26);
    EXPECT_LE(r.preference, 0.32);
    EXPECT_EQ(r.model_sum, r.detection + r.alignment + r.preference);
    EXPECT_GE(r.model_sum, 1.06 - 1e-12);
    EXPECT_LE(r.model_sum, 2.12 + 1e-12);
  }
}

TEST(BenchmarkSuite, DeterministicAndTallied) {
  EXPECT_TRUE(benchmark_suite({0, 0, 0, 0, 0, 0}, 1).empty());
  const auto a = benchmark_suite({10, 10, 10, 10, 10, 10}, 1);
  const auto b = benchmark_suite({10, 10, 10, 10, 10, 10}, 1);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(format_prompt_line(a[i]), format_prompt_line(b[i]));

  const auto big = benchmark_suite({100, 100, 100, 100, 100, 100}, 3);
  std::array<int, kNumCategories> tally{};
  std::set<std::string> ids;
  for (const auto& s : big) {
    ++tally[static_cast<int>(s.category)];
    ids.insert(s.id);
  }
  for (int c : tally) EXPECT_EQ(c, 100);
  EXPECT_EQ(ids.size(), big.size());
}

TEST(SuiteFormat, LineRoundTrip) {
  const auto suite = benchmark_suite({5, 5, 5, 5, 5, 5}, 8);
  std::stringstream ss;
  write_suite(ss, suite);
  const auto back = read_suite(ss);
  ASSERT_EQ(back.size(), suite.size());
  for (std::size_t i = 0; i < suite.size(); ++i) {
    EXPECT_EQ(format_prompt_line(back[i]), format_prompt_line(suite[i]));
  }
  EXPECT_EQ(format_prompt_line(PromptSpec{"p-1", Category::Position,
                                          {{0, std::nullopt, 1}, {1, 2, 1}}, Relation::Above}),
            "p-1|position|person:any:1,dog:yellow:1|above");
}

TEST(SuiteFormat, MalformedLinesAreDataErrors) {
  EXPECT_THROW(parse_prompt_line("id|single_object|person:any:1"), DataError);
  EXPECT_THROW(parse_prompt_line("id|single_object|unicorn:any:1|none"), DataError);
  EXPECT_THROW(parse_prompt_line("id|counting|dog:any:1|none"), DataError);
}
