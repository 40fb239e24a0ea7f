#include "shortcot/runlog.hpp"

#include <map>

#include <nlohmann/json.hpp>

#include "shortcot/errors.hpp"

namespace shortcot {

using nlohmann::json;

double RunLogRecord::mean_cot_length() const {
  if (rollouts.empty()) return 0;
  double s = 0;
  for (const auto& r : rollouts) s += r.cot_length;
  return s / static_cast<double>(rollouts.size());
}

double RunLogRecord::mean_model_sum() const {
  if (rollouts.empty()) return 0;
  double s = 0;
  for (const auto& r : rollouts) s += r.model_sum;
  return s / static_cast<double>(rollouts.size());
}

std::string to_json_line(const RunLogRecord& rec) {
  json rollouts = json::array();
  for (const auto& r : rec.rollouts) {
    json j = {{"cot_length", r.cot_length},   {"detection", r.detection},
              {"alignment", r.alignment},     {"preference", r.preference},
              {"model_sum", r.model_sum},     {"length_penalty", r.length_penalty},
              {"total", r.total}};
    if (!r.semantic_tokens.empty() || !r.scene_tokens.empty()) {
      j["semantic"] = r.semantic_tokens;
      j["scene"] = r.scene_tokens;
    }
    rollouts.push_back(std::move(j));
  }
  const json j = {{"epoch", rec.epoch},
                  {"step", rec.step},
                  {"prompt_id", rec.prompt_id},
                  {"category", rec.category},
                  {"strategy", rec.strategy},
                  {"group_size", rec.group_size},
                  {"rollouts", std::move(rollouts)},
                  {"advantage_mean", rec.advantage_mean},
                  {"advantage_std", rec.advantage_std},
                  {"objective", rec.objective},
                  {"mean_kl", rec.mean_kl},
                  {"update_norm", rec.update_norm},
                  {"max_ratio_deviation", rec.max_ratio_deviation}};
  return j.dump();
}

RunLogRecord parse_json_line(const std::string& line) {
  try {
    const json j = json::parse(line);
    RunLogRecord rec;
    rec.epoch = j.at("epoch").get<int>();
    rec.step = j.at("step").get<std::uint64_t>();
    rec.prompt_id = j.at("prompt_id").get<std::string>();
    rec.category = j.at("category").get<std::string>();
    rec.strategy = j.at("strategy").get<std::string>();
    rec.group_size = j.at("group_size").get<int>();
    for (const auto& r : j.at("rollouts")) {
      RolloutLog out;
      out.cot_length = r.at("cot_length").get<int>();
      out.detection = r.at("detection").get<double>();
      out.alignment = r.at("alignment").get<double>();
      out.preference = r.at("preference").get<double>();
      out.model_sum = r.at("model_sum").get<double>();
      out.length_penalty = r.at("length_penalty").get<double>();
      out.total = r.at("total").get<double>();
      if (r.contains("semantic")) {
        out.semantic_tokens = r.at("semantic").get<std::vector<TokenId>>();
        out.scene_tokens = r.at("scene").get<std::vector<TokenId>>();
      }
      rec.rollouts.push_back(std::move(out));
    }
    rec.advantage_mean = j.at("advantage_mean").get<double>();
    rec.advantage_std = j.at("advantage_std").get<double>();
    rec.objective = j.at("objective").get<double>();
    rec.mean_kl = j.at("mean_kl").get<double>();
    rec.update_norm = j.at("update_norm").get<double>();
    rec.max_ratio_deviation = j.at("max_ratio_deviation").get<double>();
    return rec;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed run-log record: ") + e.what());
  }
}

RunLogWriter::RunLogWriter(const std::filesystem::path& path, bool append)
    : out_(path, append ? std::ios::app : std::ios::trunc) {
  if (!out_) throw DataError("cannot open run log " + path.string());
}

void RunLogWriter::append(const RunLogRecord& record) {
  out_ << to_json_line(record) << '\n';
  out_.flush();
}

std::vector<RunLogRecord> read_run_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open run log " + path.string());
  std::vector<RunLogRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(parse_json_line(line));
  }
  return out;
}

std::vector<EpochSummary> summarize_epochs(const std::vector<RunLogRecord>& records) {
  struct Acc {
    EpochSummary s;
    double n = 0;
    double kl = 0;
    int steps = 0;
  };
  std::map<int, Acc> by_epoch;
  for (const auto& rec : records) {
    Acc& a = by_epoch[rec.epoch];
    a.s.epoch = rec.epoch;
    a.s.group_size = rec.group_size;
    for (const auto& r : rec.rollouts) {
      a.s.mean_cot_length += r.cot_length;
      a.s.mean_model_sum += r.model_sum;
      a.s.mean_total += r.total;
      a.s.mean_length_penalty += r.length_penalty;
      a.n += 1;
    }
    a.kl += rec.mean_kl;
    a.steps += 1;
  }
  std::vector<EpochSummary> out;
  for (auto& [epoch, a] : by_epoch) {
    if (a.n > 0) {
      a.s.mean_cot_length /= a.n;
      a.s.mean_model_sum /= a.n;
      a.s.mean_total /= a.n;
      a.s.mean_length_penalty /= a.n;
    }
    a.s.mean_kl = a.steps ? a.kl / a.steps : 0;
    out.push_back(a.s);
  }
  return out;
}

WindowStats final_window(const std::vector<RunLogRecord>& records, int epochs) {
  WindowStats w;
  if (records.empty()) return w;
  int last = 0;
  for (const auto& r : records) last = std::max(last, r.epoch);
  const int first = last - epochs + 1;
  for (const auto& rec : records) {
    if (rec.epoch < first) continue;
    for (const auto& r : rec.rollouts) {
      w.mean_cot_length += r.cot_length;
      w.mean_model_sum += r.model_sum;
      ++w.rollouts;
    }
  }
  if (w.rollouts) {
    w.mean_cot_length /= static_cast<double>(w.rollouts);
    w.mean_model_sum /= static_cast<double>(w.rollouts);
  }
  return w;
}

}  // namespace shortcot
