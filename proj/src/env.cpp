#include "shortcot/env.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "shortcot/errors.hpp"

namespace shortcot {

namespace {

constexpr std::array<std::string_view, kNumCategories> kCategoryNames = {
    "single_object", "two_objects", "counting", "colors", "color_attr", "position"};
constexpr std::array<std::string_view, kNumRelations> kRelationNames = {
    "left_of", "right_of", "above", "below"};
constexpr std::array<std::string_view, kNumKinds> kKindNames = {
    "person", "dog", "cat", "car", "bus", "cup", "chair", "bird", "apple", "clock", "book", "horse"};
constexpr std::array<std::string_view, kNumColors> kColorNames = {
    "red", "orange", "yellow", "green", "blue", "purple", "black", "white"};
constexpr std::array<std::string_view, kMaxCount> kCountWords = {"one", "two", "three", "four"};
constexpr std::array<std::string_view, kNumRelations> kRelationWords = {"left", "right", "above",
                                                                        "below"};
constexpr std::array<std::string_view, kNumFillers> kFillerWords = {
    "small", "large",   "shiny",      "round", "soft",  "bright", "old",   "new",
    "tall",  "wooden",  "a",          "the",   "scene", "with",   "in",    "of",
    "image", "showing", "detailed",   "background", "light", "view", "photo", "and",
    "there", "is",      "gently",     "lit",   "calm",  "style"};

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.push_back(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

template <std::size_t N>
int lookup(const std::array<std::string_view, N>& names, std::string_view name,
           std::string_view what) {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) {
    throw ConfigError("unknown " + std::string(what) + " '" + std::string(name) + "'");
  }
  return static_cast<int>(it - names.begin());
}

int distinct_kind(Rng& rng, int other) {
  int k = rng.uniform_int(0, kNumKinds - 2);
  return k >= other ? k + 1 : k;
}

std::string make_id(Category category, Rng& rng) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "-%08llx",
                static_cast<unsigned long long>(rng.next_u64() & 0xffffffffULL));
  return std::string(category_name(category)) + buf;
}

}  // namespace

std::string_view category_name(Category c) { return kCategoryNames[static_cast<int>(c)]; }
Category parse_category(std::string_view name) {
  return static_cast<Category>(lookup(kCategoryNames, name, "category"));
}
std::string_view relation_name(Relation r) { return kRelationNames[static_cast<int>(r)]; }
Relation parse_relation(std::string_view name) {
  return static_cast<Relation>(lookup(kRelationNames, name, "relation"));
}
std::string_view kind_name(int kind) { return kKindNames.at(kind); }
std::string_view color_name(int color) { return kColorNames.at(color); }

std::string Vocabulary::token_name(TokenId t) {
  if (t < 0 || t >= total_size()) return "<invalid>";
  if (t < kPromptSize) {
    if (t < prompt_kind(0)) return "#" + std::string(kCategoryNames[t]);
    if (t < prompt_color(0)) return "#" + std::string(kKindNames[t - prompt_kind(0)]);
    if (t < prompt_unspecified_color()) return "#" + std::string(kColorNames[t - prompt_color(0)]);
    if (t == prompt_unspecified_color()) return "#anycolor";
    if (t < prompt_relation(0)) return "#x" + std::to_string(t - prompt_unspecified_color());
    if (t < prompt_no_relation()) return "#" + std::string(kRelationNames[t - prompt_relation(0)]);
    return "#norelation";
  }
  if (t < scene_begin()) {
    if (t < color_word(0)) return std::string(kKindNames[t - object_word(0)]);
    if (t < count_word(1)) return std::string(kColorNames[t - color_word(0)]);
    if (t < relation_word(0)) return std::string(kCountWords[t - count_word(1)]);
    if (t < filler_word(0)) return std::string(kRelationWords[t - relation_word(0)]);
    if (t < end_of_cot()) return std::string(kFillerWords[t - filler_word(0)]);
    return "<eoc>";
  }
  if (t == scene_empty()) return "[ ]";
  return "[" + std::string(kColorNames[scene_color(t)]) + " " +
         std::string(kKindNames[scene_kind(t)]) + "]";
}

void validate(const PromptSpec& spec) {
  const auto fail = [&](const std::string& why) {
    throw ContractViolation("invalid prompt '" + spec.id + "': " + why);
  };
  const auto n = spec.objects.size();
  int instances = 0;
  for (const auto& o : spec.objects) {
    if (o.kind < 0 || o.kind >= kNumKinds) fail("kind out of range");
    if (o.color && (*o.color < 0 || *o.color >= kNumColors)) fail("color out of range");
    if (o.count < 1 || o.count > kMaxCount) fail("count out of range");
    instances += o.count;
  }
  if (instances > kSceneLength / 2) fail("more than 8 object instances");
  switch (spec.category) {
    case Category::SingleObject:
      if (n != 1 || spec.objects[0].count != 1) fail("single_object needs one object, count 1");
      break;
    case Category::TwoObjects:
      if (n != 2 || spec.relation) fail("two_objects needs two objects and no relation");
      break;
    case Category::Counting:
      if (n != 1 || spec.objects[0].count < 2) fail("counting needs one object, count 2..4");
      break;
    case Category::Colors:
      if (n != 1 || !spec.objects[0].color) fail("colors needs one colored object");
      break;
    case Category::ColorAttr:
      if (n != 2 || !spec.objects[0].color || !spec.objects[1].color || spec.relation) {
        fail("color_attr needs two colored objects and no relation");
      }
      break;
    case Category::Position:
      if (n != 2 || !spec.relation) fail("position needs two objects and a relation");
      break;
  }
  if (spec.relation && n != 2) fail("relation requires two objects");
}

PromptSpec generate_prompt(Category category, Rng& rng) {
  PromptSpec spec;
  spec.category = category;
  const int k0 = rng.uniform_int(0, kNumKinds - 1);
  switch (category) {
    case Category::SingleObject:
      spec.objects = {{k0, std::nullopt, 1}};
      break;
    case Category::TwoObjects:
      spec.objects = {{k0, std::nullopt, 1}, {distinct_kind(rng, k0), std::nullopt, 1}};
      break;
    case Category::Counting:
      spec.objects = {{k0, std::nullopt, rng.uniform_int(2, kMaxCount)}};
      break;
    case Category::Colors:
      spec.objects = {{k0, rng.uniform_int(0, kNumColors - 1), 1}};
      break;
    case Category::ColorAttr: {
      const int k1 = distinct_kind(rng, k0);
      const int c0 = rng.uniform_int(0, kNumColors - 1);
      int c1 = rng.uniform_int(0, kNumColors - 2);
      if (c1 >= c0) ++c1;
      spec.objects = {{k0, c0, 1}, {k1, c1, 1}};
      break;
    }
    case Category::Position:
      spec.objects = {{k0, std::nullopt, 1}, {distinct_kind(rng, k0), std::nullopt, 1}};
      spec.relation = static_cast<Relation>(rng.uniform_int(0, kNumRelations - 1));
      break;
  }
  spec.id = make_id(category, rng);
  return spec;
}

PromptSpec generate_prompt(std::string_view category, Rng& rng) {
  return generate_prompt(parse_category(category), rng);
}

std::vector<TokenId> encode_prompt(const PromptSpec& spec) {
  std::vector<TokenId> out;
  out.reserve(2 + 3 * spec.objects.size());
  out.push_back(Vocabulary::category_marker(static_cast<int>(spec.category)));
  for (const auto& o : spec.objects) {
    out.push_back(Vocabulary::prompt_kind(o.kind));
    out.push_back(o.color ? Vocabulary::prompt_color(*o.color)
                          : Vocabulary::prompt_unspecified_color());
    out.push_back(Vocabulary::prompt_count(o.count));
  }
  out.push_back(spec.relation ? Vocabulary::prompt_relation(static_cast<int>(*spec.relation))
                              : Vocabulary::prompt_no_relation());
  return out;
}

PromptSpec decode_prompt(std::span<const TokenId> tokens) {
  const auto bad = [](const std::string& why) {
    throw ContractViolation("malformed prompt encoding: " + why);
  };
  if (tokens.size() < 2 || (tokens.size() - 2) % 3 != 0) bad("length");
  PromptSpec spec;
  const TokenId cat = tokens.front();
  if (cat < 0 || cat >= kNumCategories) bad("category marker");
  spec.category = static_cast<Category>(cat);
  for (std::size_t i = 1; i + 1 < tokens.size(); i += 3) {
    ObjectRequest o;
    o.kind = tokens[i] - Vocabulary::prompt_kind(0);
    if (o.kind < 0 || o.kind >= kNumKinds) bad("kind");
    const TokenId c = tokens[i + 1];
    if (c != Vocabulary::prompt_unspecified_color()) {
      o.color = c - Vocabulary::prompt_color(0);
      if (*o.color < 0 || *o.color >= kNumColors) bad("color");
    }
    o.count = tokens[i + 2] - Vocabulary::prompt_unspecified_color();
    if (o.count < 1 || o.count > kMaxCount) bad("count");
    spec.objects.push_back(o);
  }
  const TokenId r = tokens.back();
  if (r != Vocabulary::prompt_no_relation()) {
    const int rel = r - Vocabulary::prompt_relation(0);
    if (rel < 0 || rel >= kNumRelations) bad("relation");
    spec.relation = static_cast<Relation>(rel);
  }
  return spec;
}

int Scene::occupied() const { return static_cast<int>((grid.array() != Vocabulary::scene_empty()).count()); }

int Scene::count_kind(int kind) const {
  int n = 0;
  for (int i = 0; i < kSceneLength; ++i) {
    const TokenId t = cell(i);
    if (t != Vocabulary::scene_empty() && Vocabulary::scene_kind(t) == kind) ++n;
  }
  return n;
}

int Scene::count_kind_color(int kind, int color) const {
  return static_cast<int>((grid.array() == Vocabulary::scene_object(kind, color)).count());
}

Scene decode_scene(std::span<const TokenId> tokens) {
  if (tokens.size() != static_cast<std::size_t>(kSceneLength)) {
    throw ContractViolation("scene needs " + std::to_string(kSceneLength) + " tokens, got " +
                            std::to_string(tokens.size()));
  }
  Scene scene;
  for (int i = 0; i < kSceneLength; ++i) {
    if (!Vocabulary::is_scene(tokens[i])) {
      throw ContractViolation("token " + std::to_string(tokens[i]) + " at cell " +
                              std::to_string(i) + " is not a scene token");
    }
    scene.grid(i / kGridSide, i % kGridSide) = tokens[i];
  }
  return scene;
}

double reward_detection(const Scene& scene, const PromptSpec& spec) {
  if (spec.objects.empty()) return kDetectionHigh;
  int satisfied = 0;
  for (const auto& o : spec.objects) satisfied += scene.count_kind(o.kind) == o.count;
  const double frac = static_cast<double>(satisfied) / static_cast<double>(spec.objects.size());
  return kDetectionLow + (kDetectionHigh - kDetectionLow) * frac;
}

namespace {

// Mean (row, col) of all instances of a kind; nullopt when absent.
std::optional<Eigen::Vector2d> centroid(const Scene& scene, int kind) {
  Eigen::Vector2d sum = Eigen::Vector2d::Zero();
  int n = 0;
  for (int r = 0; r < kGridSide; ++r) {
    for (int c = 0; c < kGridSide; ++c) {
      const TokenId t = scene.grid(r, c);
      if (t != Vocabulary::scene_empty() && Vocabulary::scene_kind(t) == kind) {
        sum += Eigen::Vector2d(r, c);
        ++n;
      }
    }
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

bool relation_holds(const Scene& scene, const PromptSpec& spec) {
  const auto a = centroid(scene, spec.objects[0].kind);
  const auto b = centroid(scene, spec.objects[1].kind);
  if (!a || !b) return false;
  switch (*spec.relation) {
    case Relation::LeftOf: return (*a)(1) < (*b)(1);
    case Relation::RightOf: return (*a)(1) > (*b)(1);
    case Relation::Above: return (*a)(0) < (*b)(0);
    case Relation::Below: return (*a)(0) > (*b)(0);
  }
  return false;
}

}  // namespace

double reward_alignment(const Scene& scene, const PromptSpec& spec) {
  int indicators = 0;
  int satisfied = 0;
  // An unspecified color is a vacuously true indicator.
  for (const auto& o : spec.objects) {
    ++indicators;
    if (!o.color || scene.count_kind_color(o.kind, *o.color) >= o.count) ++satisfied;
  }
  if (spec.relation && spec.objects.size() >= 2) {
    ++indicators;
    satisfied += relation_holds(scene, spec);
  }
  const double frac = indicators == 0 ? 1.0 : static_cast<double>(satisfied) / indicators;
  return kAlignmentLow + (kAlignmentHigh - kAlignmentLow) * frac;
}

double reward_preference(const Scene& scene) {
  constexpr int kTidyLimit = kSceneLength / 2;
  const int excess = std::clamp(scene.occupied() - kTidyLimit, 0, kTidyLimit);
  const double tidiness = 1.0 - static_cast<double>(excess) / kTidyLimit;
  return kPreferenceLow + (kPreferenceHigh - kPreferenceLow) * tidiness;
}

RewardBreakdown reward_ensemble(const Scene& scene, const PromptSpec& spec) {
  RewardBreakdown r;
  r.detection = reward_detection(scene, spec);
  r.alignment = reward_alignment(scene, spec);
  r.preference = reward_preference(scene);
  r.model_sum = r.detection + r.alignment + r.preference;
  r.total = r.model_sum;
  return r;
}

std::vector<PromptSpec> benchmark_suite(const std::array<int, kNumCategories>& counts,
                                        std::uint64_t seed) {
  std::vector<PromptSpec> suite;
  for (int c = 0; c < kNumCategories; ++c) {
    if (counts[c] < 0) throw ContractViolation("negative suite count");
    for (int i = 0; i < counts[c]; ++i) {
      Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(i)}));
      PromptSpec spec = generate_prompt(kAllCategories[c], rng);
      spec.id = std::string(category_name(spec.category)) + "-" + std::to_string(i);
      suite.push_back(std::move(spec));
    }
  }
  return suite;
}

std::string format_prompt_line(const PromptSpec& spec) {
  std::string line = spec.id;
  line += '|';
  line += category_name(spec.category);
  line += '|';
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    const auto& o = spec.objects[i];
    if (i) line += ',';
    line += kind_name(o.kind);
    line += ':';
    line += o.color ? color_name(*o.color) : std::string_view("any");
    line += ':';
    line += std::to_string(o.count);
  }
  line += '|';
  line += spec.relation ? relation_name(*spec.relation) : std::string_view("none");
  return line;
}

PromptSpec parse_prompt_line(std::string_view line) {
  const auto fields = split(line, '|');
  if (fields.size() != 4) {
    throw DataError("prompt line needs 4 '|' fields: '" + std::string(line) + "'");
  }
  PromptSpec spec;
  spec.id = std::string(fields[0]);
  if (spec.id.empty()) throw DataError("prompt line has empty id");
  try {
    spec.category = parse_category(fields[1]);
    for (auto obj : split(fields[2], ',')) {
      const auto parts = split(obj, ':');
      if (parts.size() != 3) throw DataError("object needs kind:color:count, got '" + std::string(obj) + "'");
      ObjectRequest o;
      o.kind = lookup(kKindNames, parts[0], "kind");
      if (parts[1] != "any") o.color = lookup(kColorNames, parts[1], "color");
      if (parts[2].size() != 1 || parts[2][0] < '1' || parts[2][0] > '0' + kMaxCount) {
        throw DataError("bad count '" + std::string(parts[2]) + "'");
      }
      o.count = parts[2][0] - '0';
      spec.objects.push_back(o);
    }
    if (fields[3] != "none") spec.relation = parse_relation(fields[3]);
    validate(spec);
  } catch (const ConfigError& e) {
    throw DataError(e.what());
  } catch (const ContractViolation& e) {
    throw DataError(e.what());
  }
  return spec;
}

void write_suite(std::ostream& out, std::span<const PromptSpec> suite) {
  for (const auto& spec : suite) out << format_prompt_line(spec) << '\n';
}

std::vector<PromptSpec> read_suite(std::istream& in) {
  std::vector<PromptSpec> suite;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    suite.push_back(parse_prompt_line(line));
  }
  return suite;
}

}  // namespace shortcot
