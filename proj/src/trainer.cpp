#include "shortcot/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "shortcot/errors.hpp"
#include "shortcot/runlog.hpp"

namespace shortcot {

std::vector<ScheduleEntry> parse_schedule(const std::string& text) {
  std::vector<ScheduleEntry> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    ScheduleEntry e;
    char dash = 0, colon = 0;
    std::stringstream is(item);
    if (!(is >> e.first_epoch >> dash >> e.last_epoch >> colon >> e.group_size) || dash != '-' ||
        colon != ':') {
      throw ConfigError("bad rollout schedule entry '" + item + "' (expected first-last:G)");
    }
    std::string rest;
    if (is >> rest) throw ConfigError("bad rollout schedule entry '" + item + "'");
    out.push_back(e);
  }
  if (out.empty()) throw ConfigError("empty rollout schedule");
  return out;
}

std::string format_schedule(const std::vector<ScheduleEntry>& schedule) {
  std::string out;
  for (const auto& e : schedule) {
    if (!out.empty()) out += ',';
    out += std::to_string(e.first_epoch) + "-" + std::to_string(e.last_epoch) + ":" +
           std::to_string(e.group_size);
  }
  return out;
}

void TrainConfig::validate() const {
  if (total_epochs < 1) throw ConfigError("train.total_epochs must be >= 1");
  if (prompts_per_epoch < 1) throw ConfigError("train.prompts_per_epoch must be >= 1");
  if (checkpoint_interval < 0) throw ConfigError("train.checkpoint_interval must be >= 0");
  if (pretrain.steps < 0 || pretrain.batch_size < 1 || !(pretrain.learning_rate > 0)) {
    throw ConfigError("invalid pretrain settings");
  }
  int next = 1;
  for (const auto& e : rollout_schedule) {
    if (e.first_epoch != next || e.last_epoch < e.first_epoch) {
      throw ConfigError("rollout schedule must partition 1.." + std::to_string(total_epochs) +
                        " in order; got '" + format_schedule(rollout_schedule) + "'");
    }
    if (e.group_size < 2) throw ConfigError("rollout schedule group sizes must be >= 2");
    next = e.last_epoch + 1;
  }
  if (next != total_epochs + 1) {
    throw ConfigError("rollout schedule must end at epoch " + std::to_string(total_epochs));
  }
  grpo.validate();
  penalty.validate();
}

int TrainConfig::group_size_for(int epoch) const {
  for (const auto& e : rollout_schedule) {
    if (epoch >= e.first_epoch && epoch <= e.last_epoch) return e.group_size;
  }
  throw ConfigError("epoch " + std::to_string(epoch) + " not covered by the rollout schedule");
}

std::uint64_t prompt_seed(std::uint64_t master, int epoch, int index) {
  return derive_seed(master, {kSeedPrompt, static_cast<std::uint64_t>(epoch),
                              static_cast<std::uint64_t>(index)});
}

std::uint64_t rollout_seed(std::uint64_t master, int epoch, int index, int rollout) {
  return derive_seed(master, {kSeedRollout, static_cast<std::uint64_t>(epoch),
                              static_cast<std::uint64_t>(index), static_cast<std::uint64_t>(rollout)});
}

Category epoch_category(int index) { return kAllCategories[index % kNumCategories]; }

namespace {

void append_mention(std::vector<TokenId>& out, const ObjectRequest& o) {
  out.push_back(Vocabulary::count_word(o.count));
  if (o.color) out.push_back(Vocabulary::color_word(*o.color));
  out.push_back(Vocabulary::object_word(o.kind));
}

void append_fillers(std::vector<TokenId>& out, int n, int first, int last, Rng& rng) {
  for (int i = 0; i < n; ++i) out.push_back(Vocabulary::filler_word(rng.uniform_int(first, last)));
}

void append_descriptors(std::vector<TokenId>& out, int n, Rng& rng) {
  append_fillers(out, n, 0, kNumDescriptors - 1, rng);
}

void append_generic(std::vector<TokenId>& out, int n, Rng& rng) {
  append_fillers(out, n, kNumDescriptors, kNumFillers - 1, rng);
}

}  // namespace

std::vector<TokenId> canonical_scene(const PromptSpec& spec, Rng& rng) {
  std::vector<TokenId> scene(kSceneLength, Vocabulary::scene_empty());
  const auto token_for = [&](const ObjectRequest& o) {
    return Vocabulary::scene_object(o.kind, o.color ? *o.color : rng.uniform_int(0, kNumColors - 1));
  };
  if (spec.relation) {
    // The first-listed object goes to the cell that satisfies the relation.
    int cell_a = 0, cell_b = 1;
    switch (*spec.relation) {
      case Relation::LeftOf: cell_a = 0; cell_b = 1; break;
      case Relation::RightOf: cell_a = 1; cell_b = 0; break;
      case Relation::Above: cell_a = 0; cell_b = kGridSide; break;
      case Relation::Below: cell_a = kGridSide; cell_b = 0; break;
    }
    scene[cell_a] = token_for(spec.objects[0]);
    scene[cell_b] = token_for(spec.objects[1]);
    return scene;
  }
  int cell = 0;
  for (const auto& o : spec.objects) {
    for (int i = 0; i < o.count; ++i) scene[cell++] = token_for(o);
  }
  return scene;
}

VerboseTarget make_verbose_target(const PromptSpec& spec, Rng& rng) {
  const int target = rng.uniform_int(kVerboseMinContent, kVerboseMaxContent);
  // Unspecified colors are fixed up front so the mentions and the layout agree.
  PromptSpec resolved = spec;
  for (auto& o : resolved.objects) {
    if (!o.color) o.color = rng.uniform_int(0, kNumColors - 1);
  }
  std::vector<TokenId> first, plan;
  for (std::size_t i = 0; i < resolved.objects.size(); ++i) {
    append_mention(first, resolved.objects[i]);
    append_descriptors(first, rng.uniform_int(3, 6), rng);
    append_mention(plan, resolved.objects[i]);
    if (i == 0 && spec.relation) {
      first.push_back(Vocabulary::relation_word(static_cast<int>(*spec.relation)));
      plan.push_back(Vocabulary::relation_word(static_cast<int>(*spec.relation)));
    }
  }
  // The second mentions close the CoT, so they sit nearest the scene phase.
  const int pad = std::max(0, target - static_cast<int>(first.size() + plan.size()));
  const int intro = rng.uniform_int(0, pad);
  const int middle = pad - intro;

  VerboseTarget out;
  append_generic(out.semantic, intro, rng);
  out.semantic.insert(out.semantic.end(), first.begin(), first.end());
  append_generic(out.semantic, middle, rng);
  out.semantic.insert(out.semantic.end(), plan.begin(), plan.end());
  out.semantic.push_back(Vocabulary::end_of_cot());
  out.scene = canonical_scene(resolved, rng);
  return out;
}

PolicyParams initial_params(std::uint64_t seed, std::uint32_t embedding_dim, std::uint32_t hidden_dim) {
  return init_params(Vocabulary::shape(embedding_dim, hidden_dim), derive_seed(seed, {kSeedInit}));
}

PolicyParams verbose_prior(std::uint64_t seed, const PretrainConfig& config, std::uint32_t embedding_dim,
                           std::uint32_t hidden_dim) {
  return pretrain_verbose(initial_params(seed, embedding_dim, hidden_dim), config, seed);
}

PolicyParams pretrain_verbose(PolicyParams params, const PretrainConfig& config, std::uint64_t seed) {
  if (config.steps <= 0) return params;
  Rng rng(derive_seed(seed, {kSeedPretrain}));
  GrpoConfig opt;
  opt.learning_rate = config.learning_rate;
  AdamState state = AdamState::zeros_like(params);
  std::vector<double> weights;
  for (int step = 0; step < config.steps; ++step) {
    PolicyParams grad = params.zeros_like();
    for (int b = 0; b < config.batch_size; ++b) {
      const auto category = kAllCategories[rng.uniform_int(0, kNumCategories - 1)];
      const PromptSpec spec = generate_prompt(category, rng);
      const VerboseTarget target = make_verbose_target(spec, rng);
      const auto prompt = encode_prompt(spec);
      SequenceTape<double> tape(params, nullptr, prompt, target.semantic, target.scene);
      weights.assign(tape.size(), 1.0 / (config.batch_size * static_cast<double>(tape.size())));
      tape.backward(weights, {}, grad);
    }
    auto next = update_step(params, grad, state, opt);
    params = std::move(next.params);
    state = std::move(next.state);
    if ((step + 1) % 500 == 0) spdlog::debug("pretrain step {}/{}", step + 1, config.steps);
  }
  return params;
}

namespace {

RolloutLog make_rollout_log(const Rollout& r, const RewardBreakdown& rw, bool keep_tokens) {
  RolloutLog log;
  log.cot_length = cot_length(r);
  log.detection = rw.detection;
  log.alignment = rw.alignment;
  log.preference = rw.preference;
  log.model_sum = rw.model_sum;
  log.length_penalty = rw.length_penalty;
  log.total = rw.total;
  if (keep_tokens) {
    log.semantic_tokens = r.semantic_tokens;
    log.scene_tokens = r.scene_tokens;
  }
  return log;
}

Checkpoint make_checkpoint(const PolicyParams& params, const PolicyParams& reference,
                           const AdamState& optimizer, int epoch, std::uint64_t step) {
  return {params, TrainingState{reference, optimizer, static_cast<std::uint32_t>(epoch), step}};
}

}  // namespace

TrainResult train(const TrainConfig& config, const PolicyParams& initial, const TrainOptions& options) {
  config.validate();
  namespace fs = std::filesystem;
  fs::create_directories(config.output_dir);
  if (!options.config_snapshot.empty()) {
    std::ofstream(config.output_dir / "config.snapshot") << options.config_snapshot;
  }

  PolicyParams params = initial;
  PolicyParams reference = initial;
  AdamState optimizer = AdamState::zeros_like(initial);
  int start_epoch = 1;
  std::uint64_t step = 0;
  if (options.resume) {
    if (!options.resume->training) throw DataError("resume checkpoint carries no training state");
    const TrainingState& t = *options.resume->training;
    params = options.resume->params;
    reference = t.reference;
    optimizer = t.optimizer;
    start_epoch = static_cast<int>(t.epoch) + 1;
    step = t.global_step;
  }

  const fs::path log_path = config.output_dir / "log.jsonl";
  if (options.resume) {
    // Drop records past the checkpoint so the log reads as one uninterrupted run.
    std::vector<RunLogRecord> kept;
    if (fs::exists(log_path)) {
      for (auto& r : read_run_log(log_path)) {
        if (r.epoch < start_epoch) kept.push_back(std::move(r));
      }
    }
    RunLogWriter rewrite(log_path, false);
    for (const auto& r : kept) rewrite.append(r);
  }
  RunLogWriter log(log_path, options.resume.has_value());
  std::ofstream timing(config.output_dir / "timing.jsonl",
                       options.resume ? std::ios::app : std::ios::trunc);
  const RolloutOptions rollout_options = RolloutOptions::for_strategy(config.penalty);
  const std::string strategy(strategy_name(config.penalty.strategy));

  for (int epoch = start_epoch; epoch <= config.total_epochs; ++epoch) {
    const int group = config.group_size_for(epoch);
    for (int k = 0; k < config.prompts_per_epoch; ++k) {
      const auto t0 = std::chrono::steady_clock::now();
      ++step;
      Rng prompt_rng(prompt_seed(config.seed, epoch, k));
      GroupBatch batch;
      batch.prompt = generate_prompt(epoch_category(k), prompt_rng);
      const auto prompt = encode_prompt(batch.prompt);

      // The old policy is the pre-update snapshot of the current parameters.
      const PolicyParams old_policy = params;
      std::vector<double> totals;
      for (int i = 0; i < group; ++i) {
        Rollout r = generate_rollout(old_policy, prompt, rollout_seed(config.seed, epoch, k, i),
                                     rollout_options);
        r.logprob_old = logprob_sequence(old_policy, prompt, r.semantic_tokens, r.scene_tokens);
        if (r.logprob_old != r.logprob_new) {
          throw ContractViolation("rescored rollout differs from its sampling log-probabilities");
        }
        r.logprob_ref = logprob_sequence(reference, prompt, r.semantic_tokens, r.scene_tokens);
        const Scene scene = decode_scene(r.scene_tokens);
        const RewardBreakdown rw = total_reward(reward_ensemble(scene, batch.prompt), r, config.penalty);
        totals.push_back(rw.total);
        batch.rewards.push_back(rw);
        batch.rollouts.push_back(std::move(r));
      }
      batch.advantages = compute_advantages(totals);

      const Objective obj = grpo_objective(batch, params, reference, config.grpo);
      if (!std::isfinite(obj.value) || !obj.gradient.all_finite()) {
        save_checkpoint(make_checkpoint(params, reference, optimizer, epoch - 1, step - 1),
                        config.output_dir / "last_good.bin");
        throw NumericError("non-finite objective at epoch " + std::to_string(epoch) + " step " +
                           std::to_string(step) + "; last good state kept in last_good.bin");
      }
      if (obj.max_ratio_deviation != 0.0) {
        throw ContractViolation("sampling snapshot and scoring disagree at step " + std::to_string(step));
      }
      auto update = update_step(params, obj.gradient, optimizer, config.grpo);
      params = std::move(update.params);
      optimizer = std::move(update.state);

      RunLogRecord rec;
      rec.epoch = epoch;
      rec.step = step;
      rec.prompt_id = batch.prompt.id;
      rec.category = std::string(category_name(batch.prompt.category));
      rec.strategy = strategy;
      rec.group_size = group;
      const bool keep_tokens = config.log_tokens && k == 0;
      for (int i = 0; i < group; ++i) {
        rec.rollouts.push_back(make_rollout_log(batch.rollouts[i], batch.rewards[i], keep_tokens));
      }
      double mean = 0, var = 0;
      for (double a : batch.advantages) mean += a;
      mean /= group;
      for (double a : batch.advantages) var += (a - mean) * (a - mean);
      rec.advantage_mean = mean;
      rec.advantage_std = std::sqrt(var / group);
      rec.objective = obj.value;
      rec.mean_kl = obj.mean_kl;
      rec.update_norm = update.update_norm;
      rec.max_ratio_deviation = obj.max_ratio_deviation;
      log.append(rec);

      const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      timing << "{\"epoch\":" << epoch << ",\"step\":" << step << ",\"wall_time_ms\":" << ms << "}\n";
    }
    if (config.checkpoint_interval > 0 && epoch % config.checkpoint_interval == 0) {
      save_checkpoint(make_checkpoint(params, reference, optimizer, epoch, step),
                      config.output_dir / ("ckpt_" + std::to_string(epoch) + ".bin"));
    }
    spdlog::debug("[{}] epoch {}/{} done", strategy, epoch, config.total_epochs);
  }

  TrainResult result;
  result.final_state = make_checkpoint(params, reference, optimizer, config.total_epochs, step);
  result.final_checkpoint = config.output_dir / "final.bin";
  save_checkpoint(result.final_state, result.final_checkpoint);
  return result;
}

}  // namespace shortcot
