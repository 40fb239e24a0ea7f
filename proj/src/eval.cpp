#include "shortcot/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "shortcot/errors.hpp"

namespace shortcot {

double task_score(double model_sum) {
  return std::clamp((model_sum - kModelSumLow) / (kModelSumHigh - kModelSumLow), 0.0, 1.0);
}

std::uint64_t eval_rollout_seed(std::uint64_t seed, std::size_t prompt_index) {
  return derive_seed(seed, {0xe7a1, static_cast<std::uint64_t>(prompt_index)});
}

namespace {

struct Moments {
  double n = 0, sum = 0, sum_sq = 0;
  void add(double x) {
    n += 1;
    sum += x;
    sum_sq += x * x;
  }
};

double mean_of(std::span<const double> xs) {
  double s = 0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

// Population standard deviation (two-pass).
double std_of(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  const double m = mean_of(xs);
  double v = 0;
  for (double x : xs) v += (x - m) * (x - m);
  return std::sqrt(v / static_cast<double>(xs.size()));
}

GroupStats stats_of(const std::string& name, const std::vector<const EvalRecord*>& recs) {
  GroupStats g;
  g.name = name;
  g.n = recs.size();
  if (recs.empty()) return g;
  std::vector<double> score, ms, len, tok;
  for (const auto* r : recs) {
    score.push_back(r->score);
    ms.push_back(r->model_sum);
    len.push_back(r->cot_length);
    tok.push_back(r->total_tokens);
  }
  g.score_mean = mean_of(score);
  g.model_sum_mean = mean_of(ms);
  g.cot_length_mean = mean_of(len);
  g.cot_length_std = std_of(len);
  g.tokens_mean = mean_of(tok);
  return g;
}

void check_vocabulary(const PolicyParams& params) {
  const ModelShape expected = Vocabulary::shape(params.shape.embedding_dim, params.shape.hidden_dim);
  if (!(params.shape == expected)) {
    throw DataError("checkpoint vocabulary (" + std::to_string(params.shape.semantic_vocab) + "/" +
                    std::to_string(params.shape.scene_vocab) + "/" +
                    std::to_string(params.shape.prompt_vocab) + ") does not match the task (" +
                    std::to_string(expected.semantic_vocab) + "/" + std::to_string(expected.scene_vocab) +
                    "/" + std::to_string(expected.prompt_vocab) + ")");
  }
}

}  // namespace

EvalReport aggregate(std::vector<EvalRecord> records, std::span<const PromptSpec> suite,
                     std::span<const std::uint64_t> seeds, bool use_cot) {
  EvalReport rep;
  rep.use_cot = use_cot;
  rep.seeds.assign(seeds.begin(), seeds.end());
  for (const auto& p : suite) rep.prompt_ids.push_back(p.id);
  rep.records = std::move(records);

  std::vector<Category> order;
  for (const auto& p : suite) {
    if (std::find(order.begin(), order.end(), p.category) == order.end()) order.push_back(p.category);
  }
  std::vector<const EvalRecord*> all;
  for (const auto& r : rep.records) {
    all.push_back(&r);
    rep.semantic_tokens += static_cast<std::uint64_t>(r.total_tokens - kSceneLength);
    rep.scene_tokens += kSceneLength;
  }
  for (Category c : order) {
    std::vector<const EvalRecord*> sel;
    for (const auto* r : all) {
      if (r->category == c) sel.push_back(r);
    }
    rep.categories.push_back(stats_of(std::string(category_name(c)), sel));
  }
  rep.overall = stats_of("overall", all);
  return rep;
}

EvalReport evaluate(const PolicyParams& params, std::span<const PromptSpec> suite,
                    std::span<const std::uint64_t> seeds, bool use_cot, std::optional<int> cap_length) {
  if (suite.empty()) throw ContractViolation("evaluation suite is empty");
  if (seeds.empty()) throw ContractViolation("evaluation needs at least one seed");
  check_vocabulary(params);
  RolloutOptions options;
  options.skip_cot = !use_cot;
  options.cap_length = cap_length;
  std::vector<EvalRecord> records;
  records.reserve(suite.size() * seeds.size());
  for (std::size_t i = 0; i < suite.size(); ++i) {
    const auto prompt = encode_prompt(suite[i]);
    for (std::uint64_t seed : seeds) {
      const Rollout r = generate_rollout(params, prompt, eval_rollout_seed(seed, i), options);
      const RewardBreakdown rw = reward_ensemble(decode_scene(r.scene_tokens), suite[i]);
      EvalRecord rec;
      rec.prompt_index = i;
      rec.prompt_id = suite[i].id;
      rec.category = suite[i].category;
      rec.seed = seed;
      rec.cot_length = cot_length(r);
      rec.detection = rw.detection;
      rec.alignment = rw.alignment;
      rec.preference = rw.preference;
      rec.model_sum = rw.model_sum;
      rec.score = task_score(rw.model_sum);
      rec.total_tokens = static_cast<int>(r.length());
      records.push_back(std::move(rec));
    }
  }
  return aggregate(std::move(records), suite, seeds, use_cot);
}

LengthHistogram length_histogram(std::span<const int> lengths) {
  LengthHistogram h;
  h.counts.assign(kMaxSemantic + 1, 0);
  h.n = lengths.size();
  if (lengths.empty()) return h;
  std::vector<double> xs;
  for (int l : lengths) {
    h.counts[std::clamp(l, 0, kMaxSemantic)] += 1;
    xs.push_back(l);
  }
  h.mean = mean_of(xs);
  std::vector<double> sorted = xs;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  h.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  double m2 = 0, m3 = 0;
  for (double x : xs) {
    const double d = x - h.mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= static_cast<double>(n);
  m3 /= static_cast<double>(n);
  h.skewness = m2 > 0 ? m3 / std::pow(m2, 1.5) : 0.0;
  return h;
}

std::vector<PromptSeedStats> per_prompt_stats(const EvalReport& report) {
  std::map<std::size_t, std::pair<std::vector<double>, std::vector<double>>> by_prompt;
  std::map<std::size_t, std::string> ids;
  for (const auto& r : report.records) {
    by_prompt[r.prompt_index].first.push_back(r.cot_length);
    by_prompt[r.prompt_index].second.push_back(r.score);
    ids[r.prompt_index] = r.prompt_id;
  }
  std::vector<PromptSeedStats> out;
  for (const auto& [idx, v] : by_prompt) {
    out.push_back({ids[idx], mean_of(v.first), std_of(v.first), mean_of(v.second), std_of(v.second)});
  }
  return out;
}

CorrelationMatrix pearson_matrix(std::span<const PromptSeedStats> stats) {
  if (stats.size() < 3) throw ContractViolation("Pearson matrix needs at least 3 prompts");
  const auto n = static_cast<Eigen::Index>(stats.size());
  Eigen::Matrix<double, Eigen::Dynamic, 4> x(n, 4);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = stats[static_cast<std::size_t>(i)];
    x.row(i) << s.length_mean, s.length_std, s.score_mean, s.score_std;
  }
  const Eigen::RowVector4d mean = x.colwise().mean();
  const Eigen::Matrix<double, Eigen::Dynamic, 4> centered = x.rowwise() - mean;
  const Eigen::Matrix4d cov = centered.transpose() * centered;
  CorrelationMatrix m;
  for (int a = 0; a < 4; ++a) m.zero_variance[a] = !(cov(a, a) > 0);
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) {
      if (a == b) {
        m.values(a, b) = 1.0;
      } else if (m.zero_variance[a] || m.zero_variance[b]) {
        m.values(a, b) = 0.0;
      } else {
        const double r = cov(a, b) / std::sqrt(cov(a, a) * cov(b, b));
        m.values(a, b) = std::clamp(r, -1.0, 1.0);
      }
    }
  }
  // Exact symmetry regardless of rounding in the products above.
  m.values = (0.5 * (m.values + m.values.transpose())).eval();
  m.values.diagonal().setOnes();
  return m;
}

std::vector<std::string> prompt_attributes(const PromptSpec& spec) {
  std::vector<std::string> attrs{std::string(category_name(spec.category))};
  const bool color = std::any_of(spec.objects.begin(), spec.objects.end(),
                                 [](const ObjectRequest& o) { return o.color.has_value(); });
  const bool count = std::any_of(spec.objects.begin(), spec.objects.end(),
                                 [](const ObjectRequest& o) { return o.count > 1; });
  if (color) attrs.emplace_back("color");
  if (count) attrs.emplace_back("count");
  if (spec.relation) attrs.emplace_back("relation");
  return attrs;
}

std::vector<NecessityRow> necessity_from_reports(const EvalReport& with_cot,
                                                 const EvalReport& without_cot,
                                                 std::span<const PromptSpec> suite) {
  if (with_cot.records.size() != without_cot.records.size() || with_cot.seeds != without_cot.seeds) {
    throw ContractViolation("necessity study needs seed-paired reports over one suite");
  }
  std::vector<NecessityRow> rows;
  const auto row_for = [&](const std::string& attr) -> NecessityRow& {
    for (auto& r : rows) {
      if (r.attribute == attr) return r;
    }
    rows.push_back({attr, 0, 0, 0, std::nullopt});
    return rows.back();
  };
  // Category rows first (suite order), then the attribute-kind rows.
  for (const auto& p : suite) row_for(std::string(category_name(p.category)));
  for (const char* a : {"color", "count", "relation"}) row_for(a);

  for (std::size_t k = 0; k < with_cot.records.size(); ++k) {
    const auto& a = with_cot.records[k];
    const auto& b = without_cot.records[k];
    if (a.prompt_index != b.prompt_index || a.seed != b.seed) {
      throw ContractViolation("necessity records are not seed-paired");
    }
    for (const auto& attr : prompt_attributes(suite[a.prompt_index])) {
      NecessityRow& r = row_for(attr);
      if (a.model_sum > b.model_sum) {
        ++r.favor_cot;
      } else if (b.model_sum > a.model_sum) {
        ++r.favor_no_cot;
      } else {
        ++r.ties;
      }
    }
  }
  for (auto& r : rows) {
    if (r.favor_no_cot > 0) {
      r.ratio = static_cast<double>(r.favor_cot) / static_cast<double>(r.favor_no_cot);
    }
  }
  return rows;
}

std::vector<NecessityRow> cot_necessity(const PolicyParams& params, std::span<const PromptSpec> suite,
                                        std::span<const std::uint64_t> seeds,
                                        std::optional<int> cap_length) {
  const auto with_cot = evaluate(params, suite, seeds, true, cap_length);
  const auto without_cot = evaluate(params, suite, seeds, false, cap_length);
  return necessity_from_reports(with_cot, without_cot, suite);
}

double reduction_percent(double baseline, double treated) {
  if (baseline == 0.0) return 0.0;
  return (1.0 - treated / baseline) * 100.0;
}

CostReport cost_report(const EvalReport& baseline, const EvalReport& treated) {
  if (baseline.prompt_ids != treated.prompt_ids || baseline.seeds != treated.seeds) {
    throw ContractViolation("cost report needs the same suite and seeds in both reports");
  }
  CostReport c;
  c.baseline_cot_length = baseline.overall.cot_length_mean;
  c.treated_cot_length = treated.overall.cot_length_mean;
  c.cot_reduction_percent = reduction_percent(c.baseline_cot_length, c.treated_cot_length);
  c.baseline_tokens = baseline.overall.tokens_mean;
  c.treated_tokens = treated.overall.tokens_mean;
  c.token_reduction_percent = reduction_percent(c.baseline_tokens, c.treated_tokens);
  return c;
}

std::string format_real(double x) {
  char buf[40];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

void write_report_csv(std::ostream& out, const EvalReport& report) {
  out << "category,n,score_mean,model_sum_mean,cot_length_mean,cot_length_std,tokens_per_image\n";
  const auto row = [&](const GroupStats& g) {
    out << g.name << ',' << g.n << ',' << format_real(g.score_mean) << ','
        << format_real(g.model_sum_mean) << ',' << format_real(g.cot_length_mean) << ','
        << format_real(g.cot_length_std) << ',' << format_real(g.tokens_mean) << '\n';
  };
  for (const auto& g : report.categories) row(g);
  row(report.overall);
}

void write_records_csv(std::ostream& out, const EvalReport& report) {
  out << "prompt_id,category,seed,cot_length,detection,alignment,preference,model_sum,score,total_tokens\n";
  for (const auto& r : report.records) {
    out << r.prompt_id << ',' << category_name(r.category) << ',' << r.seed << ',' << r.cot_length << ','
        << format_real(r.detection) << ',' << format_real(r.alignment) << ','
        << format_real(r.preference) << ',' << format_real(r.model_sum) << ','
        << format_real(r.score) << ',' << r.total_tokens << '\n';
  }
}

void write_histogram_csv(std::ostream& out, const LengthHistogram& h, const std::string& label) {
  for (std::size_t b = 0; b < h.counts.size(); ++b) out << label << ',' << b << ',' << h.counts[b] << '\n';
}

void write_pearson_csv(std::ostream& out, const CorrelationMatrix& m, const std::string& label) {
  for (int a = 0; a < 4; ++a) {
    out << label << ',' << kCorrelationVariables[a];
    for (int b = 0; b < 4; ++b) out << ',' << format_real(m.values(a, b));
    out << ',' << (m.zero_variance[a] ? "zero_variance" : "ok") << '\n';
  }
}

void write_necessity_csv(std::ostream& out, std::span<const NecessityRow> rows, const std::string& label) {
  for (const auto& r : rows) {
    out << label << ',' << r.attribute << ',' << r.favor_cot << ',' << r.favor_no_cot << ',' << r.ties
        << ',' << (r.ratio ? format_real(*r.ratio) : std::string("all-favor-CoT")) << '\n';
  }
}

std::vector<std::vector<std::string>> read_csv(std::istream& in) {
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace shortcot
