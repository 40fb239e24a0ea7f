#include "shortcot/grpo.hpp"

#include <numeric>
#include <string>

namespace shortcot {

void GrpoConfig::validate() const {
  if (!(clip_epsilon > 0 && clip_epsilon < 1)) throw ConfigError("grpo.clip_epsilon must lie in (0, 1)");
  if (!(kl_beta >= 0)) throw ConfigError("grpo.kl_beta must be >= 0");
  if (!(learning_rate > 0)) throw ConfigError("grpo.learning_rate must be > 0");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1)) {
    throw ConfigError("adam decay rates must lie in [0, 1)");
  }
  if (!(adam_epsilon > 0)) throw ConfigError("grpo.adam_epsilon must be > 0");
}

std::vector<double> compute_advantages(std::span<const double> totals) {
  if (totals.size() < 2) throw ContractViolation("advantages need a group of at least 2");
  for (double x : totals) {
    if (!std::isfinite(x)) throw NumericError("non-finite reward in group");
  }
  const double n = static_cast<double>(totals.size());
  const double mean = std::accumulate(totals.begin(), totals.end(), 0.0) / n;
  double var = 0;
  for (double x : totals) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> adv(totals.size(), 0.0);
  if (sd < 1e-12) return adv;
  for (std::size_t i = 0; i < totals.size(); ++i) adv[i] = (totals[i] - mean) / sd;
  return adv;
}

std::vector<double> compute_ratios(std::span<const double> logprob_new,
                                   std::span<const double> logprob_old) {
  if (logprob_new.size() != logprob_old.size()) throw ContractViolation("ratio inputs differ in length");
  std::vector<double> r(logprob_new.size());
  for (std::size_t j = 0; j < r.size(); ++j) {
    if (!std::isfinite(logprob_new[j]) || !std::isfinite(logprob_old[j])) {
      throw NumericError("non-finite log-probability at position " + std::to_string(j));
    }
    r[j] = std::exp(logprob_new[j] - logprob_old[j]);
  }
  return r;
}

UpdateResult update_step(const PolicyParams& params, const PolicyParams& gradient,
                         const AdamState& state, const GrpoConfig& config) {
  if (!(gradient.shape == params.shape) || !(state.first_moment.shape == params.shape)) {
    throw ContractViolation("update shapes differ");
  }
  if (!gradient.all_finite()) throw NumericError("non-finite gradient; update aborted");
  UpdateResult out{params, state, 0.0};
  out.state.step += 1;
  const double b1 = config.adam_beta1, b2 = config.adam_beta2;
  const double t = static_cast<double>(out.state.step);
  const double step_size = config.learning_rate / (1.0 - std::pow(b1, t));
  const double v_correction = 1.0 / (1.0 - std::pow(b2, t));
  auto p = out.params.blocks();
  auto m = out.state.first_moment.blocks();
  auto v = out.state.second_moment.blocks();
  const auto g = gradient.blocks();
  double sq = 0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    m[k] = b1 * m[k] + (1.0 - b1) * g[k];
    v[k] = b2 * v[k] + (1.0 - b2) * g[k].cwiseAbs2();
    const Vector delta =
        step_size * (m[k].array() / ((v[k].array() * v_correction).sqrt() + config.adam_epsilon)).matrix();
    p[k] += delta;
    sq += delta.squaredNorm();
  }
  out.params.version += 1;
  out.update_norm = std::sqrt(sq);
  return out;
}

}  // namespace shortcot
