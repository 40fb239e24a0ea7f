// shortcot: pretrain, train, eval and analyze from the command line.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
// failure, 1 anything else.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "shortcot/checkpoint.hpp"
#include "shortcot/config.hpp"
#include "shortcot/errors.hpp"
#include "shortcot/eval.hpp"
#include "shortcot/runlog.hpp"
#include "shortcot/trainer.hpp"

namespace fs = std::filesystem;
using namespace shortcot;
using json = nlohmann::json;

namespace {

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
};

ResolvedConfig resolve(const CommonOptions& common, FlatConfig overrides) {
  FlatConfig file;
  if (!common.config_path.empty()) file = FlatConfig::load(common.config_path);
  for (const auto& kv : common.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    // Specific flags win over generic --set entries.
    if (!overrides.has(kv.substr(0, eq))) overrides.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (common.seed) overrides.set("seed", std::to_string(*common.seed));
  return resolve_config(file, overrides);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

void write_metadata(const fs::path& dir, const std::string& command, double seconds) {
  json meta;
  meta["command"] = command;
  meta["tool_version"] = kToolVersion;
  meta["finished_unix"] = static_cast<std::int64_t>(std::time(nullptr));
  meta["wall_seconds"] = seconds;
  write_text(dir / "metadata.json", meta.dump(2) + "\n");
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void check_shape(const PolicyParams& params, const ResolvedConfig& rc, const std::string& origin) {
  const ModelShape want = Vocabulary::shape(rc.embedding_dim, rc.hidden_dim);
  if (!(params.shape == want)) {
    throw DataError("checkpoint '" + origin + "' has dimensions that differ from the configured model");
  }
}

PolicyParams pretrained(const ResolvedConfig& rc) {
  return verbose_prior(rc.train.seed, rc.train.pretrain, rc.embedding_dim, rc.hidden_dim);
}

// --- pretrain ---------------------------------------------------------------

int cmd_pretrain(const CommonOptions& common, const std::string& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  ResolvedConfig rc = resolve(common, {});
  fs::create_directories(out_dir);
  spdlog::info("pretraining {} steps (batch {}, lr {})", rc.train.pretrain.steps, rc.train.pretrain.batch_size,
               rc.train.pretrain.learning_rate);
  const PolicyParams params = pretrained(rc);
  save_checkpoint(Checkpoint{params, std::nullopt}, fs::path(out_dir) / "pretrained.bin");
  write_text(fs::path(out_dir) / "config.snapshot", rc.snapshot());
  write_metadata(out_dir, "pretrain", seconds_since(t0));
  spdlog::info("wrote {}", (fs::path(out_dir) / "pretrained.bin").string());
  return 0;
}

// --- train ------------------------------------------------------------------

std::optional<fs::path> latest_checkpoint(const fs::path& dir) {
  static const std::regex pattern(R"(ckpt_(\d+)\.bin)");
  std::optional<fs::path> best;
  long best_epoch = -1;
  if (!fs::exists(dir)) return best;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern) && std::stol(m[1]) > best_epoch) {
      best_epoch = std::stol(m[1]);
      best = entry.path();
    }
  }
  return best;
}

struct TrainFlags {
  std::string strategy;
  std::string out;
  std::string init;
  bool fresh = false;
  bool resume = false;
  std::optional<int> epochs;
};

int cmd_train(const CommonOptions& common, const TrainFlags& flags) {
  const auto t0 = std::chrono::steady_clock::now();
  FlatConfig overrides;
  if (!flags.strategy.empty()) overrides.set("penalty.strategy", flags.strategy);
  if (!flags.out.empty()) overrides.set("train.output_dir", flags.out);
  if (!flags.init.empty()) overrides.set("train.init_checkpoint", flags.init);
  if (flags.fresh) overrides.set("train.fresh_start", "true");
  if (flags.epochs) overrides.set("train.total_epochs", std::to_string(*flags.epochs));
  const ResolvedConfig rc = resolve(common, overrides);

  TrainOptions options;
  options.config_snapshot = rc.snapshot();
  PolicyParams initial;
  if (flags.resume) {
    const auto latest = latest_checkpoint(rc.train.output_dir);
    if (!latest) throw DataError("no ckpt_<epoch>.bin to resume from in '" + rc.train.output_dir.string() + "'");
    Checkpoint ckpt = load_checkpoint(*latest);
    check_shape(ckpt.params, rc, latest->string());
    if (!ckpt.training) throw DataError("'" + latest->string() + "' carries no training state");
    spdlog::info("resuming from {}", latest->string());
    initial = ckpt.training->reference;
    options.resume = std::move(ckpt);
  } else if (!rc.init_checkpoint.empty()) {
    initial = load_checkpoint(rc.init_checkpoint).params;
    check_shape(initial, rc, rc.init_checkpoint);
  } else if (rc.fresh_start) {
    spdlog::info("fresh start: pretraining {} steps in process", rc.train.pretrain.steps);
    initial = pretrained(rc);
  } else {
    throw ConfigError("train needs --init <checkpoint>, --fresh, or --resume");
  }

  spdlog::info("training strategy={} epochs={} seed={}", strategy_name(rc.train.penalty.strategy),
               rc.train.total_epochs, rc.train.seed);
  const TrainResult result = train(rc.train, initial, options);
  write_metadata(rc.train.output_dir, "train", seconds_since(t0));
  spdlog::info("wrote {}", result.final_checkpoint.string());
  return 0;
}

// --- eval -------------------------------------------------------------------

struct EvalFlags {
  std::string checkpoint;
  std::optional<std::uint64_t> suite_seed;
  std::string seeds;
  std::optional<int> per_category;
  std::string suite_file;
  bool no_cot = false;
  std::optional<int> cap;
  std::string out = "eval";
};

std::vector<PromptSpec> load_suite(const ResolvedConfig& rc, const std::string& suite_file) {
  if (!suite_file.empty()) {
    std::ifstream in(suite_file);
    if (!in) throw DataError("cannot read suite '" + suite_file + "'");
    return read_suite(in);
  }
  std::array<int, kNumCategories> counts;
  counts.fill(rc.eval.per_category);
  return benchmark_suite(counts, rc.eval.suite_seed);
}

json group_json(const GroupStats& g) {
  return {{"name", g.name},
          {"n", g.n},
          {"score_mean", g.score_mean},
          {"model_sum_mean", g.model_sum_mean},
          {"cot_length_mean", g.cot_length_mean},
          {"cot_length_std", g.cot_length_std},
          {"tokens_per_image", g.tokens_mean}};
}

int cmd_eval(const CommonOptions& common, const EvalFlags& flags) {
  const auto t0 = std::chrono::steady_clock::now();
  FlatConfig overrides;
  if (flags.suite_seed) overrides.set("eval.suite_seed", std::to_string(*flags.suite_seed));
  if (!flags.seeds.empty()) overrides.set("eval.seeds", flags.seeds);
  if (flags.per_category) overrides.set("eval.per_category", std::to_string(*flags.per_category));
  const ResolvedConfig rc = resolve(common, overrides);

  const PolicyParams params = load_checkpoint(flags.checkpoint).params;
  const auto suite = load_suite(rc, flags.suite_file);
  const EvalReport report = evaluate(params, suite, rc.eval.seeds, !flags.no_cot, flags.cap);

  const fs::path out(flags.out);
  fs::create_directories(out);
  {
    std::ofstream f(out / "report.csv");
    write_report_csv(f, report);
  }
  {
    std::ofstream f(out / "records.csv");
    write_records_csv(f, report);
  }
  {
    std::ofstream f(out / "suite.txt");
    write_suite(f, suite);
  }
  json summary;
  summary["checkpoint"] = flags.checkpoint;
  summary["use_cot"] = report.use_cot;
  summary["cap_length"] = flags.cap ? json(*flags.cap) : json(nullptr);
  summary["seeds"] = report.seeds;
  summary["prompts"] = report.prompt_ids.size();
  summary["semantic_tokens"] = report.semantic_tokens;
  summary["scene_tokens"] = report.scene_tokens;
  summary["overall"] = group_json(report.overall);
  summary["categories"] = json::array();
  for (const auto& g : report.categories) summary["categories"].push_back(group_json(g));
  write_text(out / "summary.json", summary.dump(2) + "\n");
  write_metadata(out, "eval", seconds_since(t0));
  spdlog::info("overall model_sum {:.4f}, mean CoT length {:.2f}", report.overall.model_sum_mean,
               report.overall.cot_length_mean);
  return 0;
}

// --- analyze ----------------------------------------------------------------

struct RunData {
  std::string label;
  std::string strategy;
  std::vector<RunLogRecord> records;
  std::optional<EvalReport> with_cot;
  std::optional<EvalReport> without_cot;
};

int cmd_analyze(const CommonOptions& common, const std::vector<std::string>& runs, const std::string& out_dir,
                const EvalFlags& eval_flags, int window) {
  const auto t0 = std::chrono::steady_clock::now();
  FlatConfig overrides;
  if (eval_flags.suite_seed) overrides.set("eval.suite_seed", std::to_string(*eval_flags.suite_seed));
  if (!eval_flags.seeds.empty()) overrides.set("eval.seeds", eval_flags.seeds);
  if (eval_flags.per_category) overrides.set("eval.per_category", std::to_string(*eval_flags.per_category));
  const ResolvedConfig rc = resolve(common, overrides);
  const auto suite = load_suite(rc, eval_flags.suite_file);

  std::vector<RunData> data;
  for (const auto& dir : runs) {
    RunData d;
    d.label = fs::path(dir).filename().string();
    if (d.label.empty()) d.label = fs::path(dir).parent_path().filename().string();
    const fs::path log_path = fs::path(dir) / "log.jsonl";
    if (!fs::exists(log_path)) throw DataError("no log.jsonl in '" + dir + "'");
    d.records = read_run_log(log_path);
    if (d.records.empty()) throw DataError("empty run log in '" + dir + "'");
    d.strategy = d.records.front().strategy;
    const fs::path final_ckpt = fs::path(dir) / "final.bin";
    if (fs::exists(final_ckpt)) {
      const PolicyParams params = load_checkpoint(final_ckpt).params;
      d.with_cot = evaluate(params, suite, rc.eval.seeds, true);
      d.without_cot = evaluate(params, suite, rc.eval.seeds, false);
    } else {
      spdlog::warn("'{}' has no final.bin; evaluation outputs skipped for it", dir);
    }
    data.push_back(std::move(d));
  }

  const fs::path out(out_dir);
  fs::create_directories(out);
  std::ofstream lengths(out / "length_curves.csv");
  std::ofstream rewards(out / "reward_curves.csv");
  std::ofstream hist(out / "histogram.csv");
  std::ofstream pearson(out / "pearson.csv");
  std::ofstream necessity(out / "necessity.csv");
  lengths << "run,strategy,epoch,group_size,mean_cot_length\n";
  rewards << "run,strategy,epoch,mean_model_sum,mean_total,mean_length_penalty,mean_kl\n";
  hist << kHistogramCsvHeader << '\n';
  pearson << kPearsonCsvHeader << '\n';
  necessity << kNecessityCsvHeader << '\n';

  json summary;
  summary["window_epochs"] = window;
  summary["runs"] = json::array();
  for (const auto& d : data) {
    for (const auto& e : summarize_epochs(d.records)) {
      lengths << d.label << ',' << d.strategy << ',' << e.epoch << ',' << e.group_size << ','
              << format_real(e.mean_cot_length) << '\n';
      rewards << d.label << ',' << d.strategy << ',' << e.epoch << ',' << format_real(e.mean_model_sum) << ','
              << format_real(e.mean_total) << ',' << format_real(e.mean_length_penalty) << ','
              << format_real(e.mean_kl) << '\n';
    }
    const WindowStats w = final_window(d.records, window);
    json run = {{"run", d.label},
                {"strategy", d.strategy},
                {"final_window_cot_length", w.mean_cot_length},
                {"final_window_model_sum", w.mean_model_sum}};
    if (d.with_cot) {
      std::vector<int> lens;
      for (const auto& r : d.with_cot->records) lens.push_back(r.cot_length);
      const LengthHistogram h = length_histogram(lens);
      write_histogram_csv(hist, h, d.label);
      const auto stats = per_prompt_stats(*d.with_cot);
      if (stats.size() >= 3) {
        const CorrelationMatrix m = pearson_matrix(stats);
        write_pearson_csv(pearson, m, d.label);
        run["pearson_score_length"] = m.values(2, 0);
      }
      const auto rows = necessity_from_reports(*d.with_cot, *d.without_cot, suite);
      write_necessity_csv(necessity, rows, d.label);
      run["eval_model_sum"] = d.with_cot->overall.model_sum_mean;
      run["eval_cot_length"] = d.with_cot->overall.cot_length_mean;
      run["length_skewness"] = h.skewness;
    }
    summary["runs"].push_back(run);
  }

  const auto none_it = std::find_if(data.begin(), data.end(), [](const RunData& d) { return d.strategy == "none"; });
  if (none_it == data.end()) {
    spdlog::warn("no run with strategy none among the inputs; cost summary omitted");
  } else {
    std::ofstream cost(out / "cost_summary.csv");
    cost << "run,strategy,baseline_cot_length,cot_length,cot_reduction_percent,baseline_tokens,tokens,"
            "token_reduction_percent,log_baseline_cot_length,log_cot_length,log_cot_reduction_percent\n";
    const WindowStats base_w = final_window(none_it->records, window);
    for (const auto& d : data) {
      const WindowStats w = final_window(d.records, window);
      CostReport c;
      if (d.with_cot && none_it->with_cot) c = cost_report(*none_it->with_cot, *d.with_cot);
      cost << d.label << ',' << d.strategy << ',' << format_real(c.baseline_cot_length) << ','
           << format_real(c.treated_cot_length) << ',' << format_real(c.cot_reduction_percent) << ','
           << format_real(c.baseline_tokens) << ',' << format_real(c.treated_tokens) << ','
           << format_real(c.token_reduction_percent) << ',' << format_real(base_w.mean_cot_length) << ','
           << format_real(w.mean_cot_length) << ','
           << format_real(reduction_percent(base_w.mean_cot_length, w.mean_cot_length)) << '\n';
    }
  }
  write_text(out / "summary.json", summary.dump(2) + "\n");
  write_metadata(out, "analyze", seconds_since(t0));
  return 0;
}

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("shortcot");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* level = std::getenv("SHORTCOT_LOG_LEVEL")) {
    spdlog::set_level(spdlog::level::from_str(level));
  }
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();

  CLI::App app{"Length-penalized GRPO on a synthetic text-to-scene task"};
  app.require_subcommand(1);
  CommonOptions common;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "Flat key = value config file");
    sub->add_option("--set", common.sets, "Override a config key (key=value), repeatable");
    sub->add_option("--seed", common.seed, "Master seed");
  };

  auto* pretrain = app.add_subcommand("pretrain", "Fit the verbose prior and write pretrained.bin");
  add_common(pretrain);
  std::string pretrain_out = "pretrain";
  pretrain->add_option("--out", pretrain_out, "Output directory");

  auto* train_cmd = app.add_subcommand("train", "Run GRPO with a length strategy");
  add_common(train_cmd);
  TrainFlags train_flags;
  train_cmd->add_option("--strategy", train_flags.strategy, "none, cap, target, hard or soft");
  train_cmd->add_option("--out", train_flags.out, "Run directory");
  train_cmd->add_option("--init", train_flags.init, "Pretrained checkpoint to start from");
  train_cmd->add_flag("--fresh", train_flags.fresh, "Pretrain in process instead of loading --init");
  train_cmd->add_flag("--resume", train_flags.resume, "Continue from the newest ckpt_<epoch>.bin in the run directory");
  train_cmd->add_option("--epochs", train_flags.epochs, "Total epochs");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on the benchmark suite");
  add_common(eval_cmd);
  EvalFlags eval_flags;
  eval_cmd->add_option("--checkpoint", eval_flags.checkpoint, "Checkpoint to evaluate")->required();
  eval_cmd->add_option("--suite-seed", eval_flags.suite_seed, "Seed of the generated suite");
  eval_cmd->add_option("--seeds", eval_flags.seeds, "Comma-separated evaluation seeds (default 1,2,3,4)");
  eval_cmd->add_option("--per-category", eval_flags.per_category, "Prompts per category");
  eval_cmd->add_option("--suite", eval_flags.suite_file, "Read prompts from a suite file instead");
  eval_cmd->add_flag("--no-cot", eval_flags.no_cot, "Skip the semantic phase");
  eval_cmd->add_option("--cap", eval_flags.cap, "Truncate CoT to this many tokens");
  eval_cmd->add_option("--out", eval_flags.out, "Output directory");

  auto* analyze = app.add_subcommand("analyze", "Curves, histogram, correlation, necessity and cost over runs");
  add_common(analyze);
  std::vector<std::string> runs;
  std::string analyze_out = "analysis";
  int window = 50;
  EvalFlags analyze_eval;
  analyze->add_option("--runs", runs, "Run directories")->required();
  analyze->add_option("--out", analyze_out, "Output directory");
  analyze->add_option("--window", window, "Final-window length in epochs")->check(CLI::PositiveNumber);
  analyze->add_option("--suite-seed", analyze_eval.suite_seed, "Seed of the generated suite");
  analyze->add_option("--seeds", analyze_eval.seeds, "Comma-separated evaluation seeds");
  analyze->add_option("--per-category", analyze_eval.per_category, "Prompts per category");
  analyze->add_option("--suite", analyze_eval.suite_file, "Read prompts from a suite file instead");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (pretrain->parsed()) return cmd_pretrain(common, pretrain_out);
    if (train_cmd->parsed()) return cmd_train(common, train_flags);
    if (eval_cmd->parsed()) return cmd_eval(common, eval_flags);
    if (analyze->parsed()) return cmd_analyze(common, runs, analyze_out, analyze_eval, window);
  } catch (const ConfigError& e) {
    spdlog::error("configuration error: {}", e.what());
    return 2;
  } catch (const DataError& e) {
    spdlog::error("data error: {}", e.what());
    return 3;
  } catch (const NumericError& e) {
    spdlog::error("numeric failure: {}", e.what());
    return 4;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 1;
}
