#include "shortcot/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "shortcot/errors.hpp"
#include "shortcot/eval.hpp"

namespace shortcot {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

long long to_integer(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("key '" + key + "' expects an integer, got '" + v + "'");
  }
  return out;
}

double to_real(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) {
    throw ConfigError("key '" + key + "' expects a number, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("key '" + key + "' expects true/false, got '" + v + "'");
}

}  // namespace

FlatConfig FlatConfig::parse(const std::string& text, const std::string& origin) {
  FlatConfig cfg;
  std::stringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    cfg.values_[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

FlatConfig FlatConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || ptr != item.data() + item.size()) {
      throw ConfigError("bad seed '" + item + "' in list '" + text + "'");
    }
    seeds.push_back(v);
  }
  if (seeds.empty()) throw ConfigError("empty seed list");
  return seeds;
}

std::string format_seed_list(const std::vector<std::uint64_t>& seeds) {
  std::string out;
  for (auto s : seeds) {
    if (!out.empty()) out += ',';
    out += std::to_string(s);
  }
  return out;
}

std::vector<ScheduleEntry> default_schedule(int total_epochs) {
  if (total_epochs <= 600) return {{1, total_epochs, 4}};
  return {{1, 600, 4}, {601, total_epochs, 3}};
}

ResolvedConfig resolve_config(const FlatConfig& file, const FlatConfig& overrides) {
  std::map<std::string, std::string> merged = file.values();
  for (const auto& [k, v] : overrides.values()) merged[k] = v;

  ResolvedConfig rc;
  TrainConfig& t = rc.train;
  std::string schedule_text;
  std::string alpha_text;
  std::string strategy_text = "none";

  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"tool.version", [](const std::string&, const std::string&) {}},
      {"seed", [&](auto& k, auto& v) { t.seed = static_cast<std::uint64_t>(to_integer(k, v)); }},
      {"model.embedding_dim", [&](auto& k, auto& v) { rc.embedding_dim = static_cast<std::uint32_t>(to_integer(k, v)); }},
      {"model.hidden_dim", [&](auto& k, auto& v) { rc.hidden_dim = static_cast<std::uint32_t>(to_integer(k, v)); }},
      {"pretrain.steps", [&](auto& k, auto& v) { t.pretrain.steps = static_cast<int>(to_integer(k, v)); }},
      {"pretrain.batch_size", [&](auto& k, auto& v) { t.pretrain.batch_size = static_cast<int>(to_integer(k, v)); }},
      {"pretrain.learning_rate", [&](auto& k, auto& v) { t.pretrain.learning_rate = to_real(k, v); }},
      {"train.total_epochs", [&](auto& k, auto& v) { t.total_epochs = static_cast<int>(to_integer(k, v)); }},
      {"train.prompts_per_epoch", [&](auto& k, auto& v) { t.prompts_per_epoch = static_cast<int>(to_integer(k, v)); }},
      {"train.rollout_schedule", [&](auto&, auto& v) { schedule_text = v; }},
      {"train.checkpoint_interval", [&](auto& k, auto& v) { t.checkpoint_interval = static_cast<int>(to_integer(k, v)); }},
      {"train.output_dir", [&](auto&, auto& v) { t.output_dir = v; }},
      {"train.init_checkpoint", [&](auto&, auto& v) { rc.init_checkpoint = v; }},
      {"train.fresh_start", [&](auto& k, auto& v) { rc.fresh_start = to_bool(k, v); }},
      {"train.log_tokens", [&](auto& k, auto& v) { t.log_tokens = to_bool(k, v); }},
      {"grpo.epsilon", [&](auto& k, auto& v) { t.grpo.clip_epsilon = to_real(k, v); }},
      {"grpo.beta", [&](auto& k, auto& v) { t.grpo.kl_beta = to_real(k, v); }},
      {"grpo.learning_rate", [&](auto& k, auto& v) { t.grpo.learning_rate = to_real(k, v); }},
      {"grpo.adam_beta1", [&](auto& k, auto& v) { t.grpo.adam_beta1 = to_real(k, v); }},
      {"grpo.adam_beta2", [&](auto& k, auto& v) { t.grpo.adam_beta2 = to_real(k, v); }},
      {"grpo.adam_epsilon", [&](auto& k, auto& v) { t.grpo.adam_epsilon = to_real(k, v); }},
      {"penalty.strategy", [&](auto&, auto& v) { strategy_text = v; }},
      {"penalty.alpha", [&](auto&, auto& v) { alpha_text = v; }},
      {"penalty.target_length", [&](auto& k, auto& v) { t.penalty.target_length = static_cast<int>(to_integer(k, v)); }},
      {"penalty.cap_length", [&](auto& k, auto& v) { t.penalty.cap_length = static_cast<int>(to_integer(k, v)); }},
      {"penalty.threshold_detection", [&](auto& k, auto& v) { t.penalty.thresholds.detection = to_real(k, v); }},
      {"penalty.threshold_alignment", [&](auto& k, auto& v) { t.penalty.thresholds.alignment = to_real(k, v); }},
      {"penalty.threshold_preference", [&](auto& k, auto& v) { t.penalty.thresholds.preference = to_real(k, v); }},
      {"eval.seeds", [&](auto&, auto& v) { rc.eval.seeds = parse_seed_list(v); }},
      {"eval.suite_seed", [&](auto& k, auto& v) { rc.eval.suite_seed = static_cast<std::uint64_t>(to_integer(k, v)); }},
      {"eval.per_category", [&](auto& k, auto& v) { rc.eval.per_category = static_cast<int>(to_integer(k, v)); }},
  };

  for (const auto& [key, value] : merged) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(key, value);
  }
  t.penalty.strategy = parse_strategy(strategy_text);
  t.penalty.alpha = alpha_text.empty() ? PenaltyConfig::default_alpha(t.penalty.strategy)
                                       : to_real("penalty.alpha", alpha_text);
  t.rollout_schedule = schedule_text.empty() ? default_schedule(t.total_epochs) : parse_schedule(schedule_text);
  if (rc.embedding_dim == 0 || rc.hidden_dim == 0) throw ConfigError("model dimensions must be positive");
  if (rc.eval.per_category < 0) throw ConfigError("eval.per_category must be >= 0");
  t.validate();
  return rc;
}

std::string ResolvedConfig::snapshot() const {
  const TrainConfig& t = train;
  std::map<std::string, std::string> kv = {
      {"tool.version", kToolVersion},
      {"seed", std::to_string(t.seed)},
      {"model.embedding_dim", std::to_string(embedding_dim)},
      {"model.hidden_dim", std::to_string(hidden_dim)},
      {"pretrain.steps", std::to_string(t.pretrain.steps)},
      {"pretrain.batch_size", std::to_string(t.pretrain.batch_size)},
      {"pretrain.learning_rate", format_real(t.pretrain.learning_rate)},
      {"train.total_epochs", std::to_string(t.total_epochs)},
      {"train.prompts_per_epoch", std::to_string(t.prompts_per_epoch)},
      {"train.rollout_schedule", format_schedule(t.rollout_schedule)},
      {"train.checkpoint_interval", std::to_string(t.checkpoint_interval)},
      {"train.output_dir", t.output_dir.string()},
      {"train.init_checkpoint", init_checkpoint},
      {"train.fresh_start", fresh_start ? "true" : "false"},
      {"train.log_tokens", t.log_tokens ? "true" : "false"},
      {"grpo.epsilon", format_real(t.grpo.clip_epsilon)},
      {"grpo.beta", format_real(t.grpo.kl_beta)},
      {"grpo.learning_rate", format_real(t.grpo.learning_rate)},
      {"grpo.adam_beta1", format_real(t.grpo.adam_beta1)},
      {"grpo.adam_beta2", format_real(t.grpo.adam_beta2)},
      {"grpo.adam_epsilon", format_real(t.grpo.adam_epsilon)},
      {"penalty.strategy", std::string(strategy_name(t.penalty.strategy))},
      {"penalty.alpha", format_real(t.penalty.alpha)},
      {"penalty.target_length", std::to_string(t.penalty.target_length)},
      {"penalty.cap_length", std::to_string(t.penalty.cap_length)},
      {"penalty.threshold_detection", format_real(t.penalty.thresholds.detection)},
      {"penalty.threshold_alignment", format_real(t.penalty.thresholds.alignment)},
      {"penalty.threshold_preference", format_real(t.penalty.thresholds.preference)},
      {"eval.seeds", format_seed_list(eval.seeds)},
      {"eval.suite_seed", std::to_string(eval.suite_seed)},
      {"eval.per_category", std::to_string(eval.per_category)},
  };
  std::string out = "# resolved configuration; precedence: defaults < config file < command line\n";
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

}  // namespace shortcot
