#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "shortcot/errors.hpp"
#include "shortcot/random.hpp"
#include "shortcot/vocabulary.hpp"

namespace shortcot {

enum class Phase { Semantic, Scene };

/// Weight of the previous decayed prefix sum when a new token is appended.
inline constexpr double kPrefixDecay = 0.9;
inline constexpr double kInitRange = 0.05;

/// Learnable parameters of the pooled-embedding autoregressive policy.
///
/// state (2d+2) -> tanh(state * hidden_weights + hidden_bias) (h)
///              -> hidden * output_weights + output_bias (total vocab)
template <typename Scalar>
struct BasicPolicyParams {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Block = Eigen::Map<Vector>;
  using ConstBlock = Eigen::Map<const Vector>;

  ModelShape shape;
  Matrix token_embeddings;  // total_vocab x d
  Matrix hidden_weights;    // (2d+2) x h
  Vector hidden_bias;       // h
  Matrix output_weights;    // h x total_vocab
  Vector output_bias;       // total_vocab
  std::uint64_t version = 0;

  static BasicPolicyParams zeros(const ModelShape& shape) {
    if (shape.semantic_vocab == 0 || shape.scene_vocab == 0 || shape.prompt_vocab == 0 ||
        shape.embedding_dim == 0 || shape.hidden_dim == 0) {
      throw ConfigError("policy dimensions must all be positive");
    }
    BasicPolicyParams p;
    p.shape = shape;
    const int v = shape.total_vocab();
    const int d = static_cast<int>(shape.embedding_dim);
    const int h = static_cast<int>(shape.hidden_dim);
    p.token_embeddings = Matrix::Zero(v, d);
    p.hidden_weights = Matrix::Zero(shape.state_dim(), h);
    p.hidden_bias = Vector::Zero(h);
    p.output_weights = Matrix::Zero(h, v);
    p.output_bias = Vector::Zero(v);
    return p;
  }

  BasicPolicyParams zeros_like() const { return zeros(shape); }

  /// The five parameter blocks as flat views, in checkpoint order.
  std::array<Block, 5> blocks() {
    return {Block(token_embeddings.data(), token_embeddings.size()),
            Block(hidden_weights.data(), hidden_weights.size()),
            Block(hidden_bias.data(), hidden_bias.size()),
            Block(output_weights.data(), output_weights.size()),
            Block(output_bias.data(), output_bias.size())};
  }
  std::array<ConstBlock, 5> blocks() const {
    return {ConstBlock(token_embeddings.data(), token_embeddings.size()),
            ConstBlock(hidden_weights.data(), hidden_weights.size()),
            ConstBlock(hidden_bias.data(), hidden_bias.size()),
            ConstBlock(output_weights.data(), output_weights.size()),
            ConstBlock(output_bias.data(), output_bias.size())};
  }

  Eigen::Index size() const {
    Eigen::Index n = 0;
    for (const auto& b : blocks()) n += b.size();
    return n;
  }

  /// Flat coefficient access across blocks (block-major, storage order inside).
  Scalar& coeff(Eigen::Index i) {
    for (auto& b : blocks()) {
      if (i < b.size()) return b[i];
      i -= b.size();
    }
    throw ContractViolation("parameter index out of range");
  }
  Scalar coeff(Eigen::Index i) const { return const_cast<BasicPolicyParams&>(*this).coeff(i); }

  template <typename Other>
  BasicPolicyParams<Other> cast() const {
    BasicPolicyParams<Other> out;
    out.shape = shape;
    out.token_embeddings = token_embeddings.template cast<Other>();
    out.hidden_weights = hidden_weights.template cast<Other>();
    out.hidden_bias = hidden_bias.template cast<Other>();
    out.output_weights = output_weights.template cast<Other>();
    out.output_bias = output_bias.template cast<Other>();
    out.version = version;
    return out;
  }

  bool all_finite() const {
    for (const auto& b : blocks()) {
      if (!b.allFinite()) return false;
    }
    return true;
  }

  Scalar squared_norm() const {
    Scalar s = 0;
    for (const auto& b : blocks()) s += b.squaredNorm();
    return s;
  }

  /// this += alpha * other
  BasicPolicyParams& axpy(Scalar alpha, const BasicPolicyParams& other) {
    auto dst = blocks();
    const auto src = other.blocks();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += alpha * src[k];
    return *this;
  }

  BasicPolicyParams& operator*=(Scalar alpha) {
    for (auto& b : blocks()) b *= alpha;
    return *this;
  }

  /// Bitwise-equal coefficients and identical shape.
  bool identical(const BasicPolicyParams& other) const {
    if (!(shape == other.shape)) return false;
    const auto a = blocks();
    const auto b = other.blocks();
    for (std::size_t k = 0; k < a.size(); ++k) {
      if (a[k].size() != b[k].size()) return false;
      if (std::memcmp(a[k].data(), b[k].data(), sizeof(Scalar) * a[k].size()) != 0) return false;
    }
    return true;
  }
};

using PolicyParams = BasicPolicyParams<double>;
using Vector = PolicyParams::Vector;

/// Entries i.i.d. uniform in [-0.05, 0.05], drawn in checkpoint order.
template <typename Scalar = double>
BasicPolicyParams<Scalar> init_params(const ModelShape& shape, std::uint64_t seed) {
  auto p = BasicPolicyParams<Scalar>::zeros(shape);
  Rng rng(seed);
  for (auto& b : p.blocks()) {
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = Scalar(rng.uniform(-kInitRange, kInitRange));
  }
  return p;
}

/// One sampled response o = (s, t) with per-position log-probabilities.
struct Rollout {
  std::vector<TokenId> prompt_tokens;
  std::vector<TokenId> semantic_tokens;
  std::vector<TokenId> scene_tokens;
  std::vector<double> logprob_new;
  std::vector<double> logprob_old;
  std::vector<double> logprob_ref;
  std::uint64_t seed = 0;

  std::size_t length() const { return semantic_tokens.size() + scene_tokens.size(); }
};

namespace detail {

struct Range {
  int begin;
  int size;
};

inline Range phase_range(const ModelShape& shape, Phase phase) {
  if (phase == Phase::Semantic) {
    return {shape.semantic_begin(), static_cast<int>(shape.semantic_vocab)};
  }
  return {shape.scene_begin(), static_cast<int>(shape.scene_vocab)};
}

inline void check_tokens(const ModelShape& shape, std::span<const TokenId> prompt,
                         std::span<const TokenId> s, std::span<const TokenId> t) {
  for (TokenId x : prompt) {
    if (!shape.is_prompt(x)) throw ContractViolation("prompt token " + std::to_string(x) + " outside prompt range");
  }
  for (TokenId x : s) {
    if (!shape.is_semantic(x)) {
      throw ContractViolation("semantic position holds token " + std::to_string(x) +
                              " outside the semantic mask");
    }
  }
  for (TokenId x : t) {
    if (!shape.is_scene(x)) {
      throw ContractViolation("scene position holds token " + std::to_string(x) +
                              " outside the scene mask");
    }
  }
  if (s.size() > static_cast<std::size_t>(kMaxSemantic) ||
      t.size() > static_cast<std::size_t>(kSceneLength)) {
    throw ContractViolation("sequence longer than the semantic/scene budget");
  }
}

template <typename Scalar>
void log_softmax_inplace(Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& z) {
  using std::exp;
  using std::log;
  const Scalar m = z.maxCoeff();
  const Scalar lse = m + log((z.array() - m).exp().sum());
  z.array() -= lse;
}

/// Incrementally maintained conditioning context.
template <typename Scalar>
class ContextCursor {
 public:
  using Params = BasicPolicyParams<Scalar>;
  using Vec = typename Params::Vector;

  ContextCursor(const Params& params, std::span<const TokenId> prompt) : params_(&params) {
    const int d = static_cast<int>(params.shape.embedding_dim);
    prompt_mean_ = Vec::Zero(d);
    for (TokenId x : prompt) prompt_mean_ += params.token_embeddings.row(x).transpose();
    if (!prompt.empty()) prompt_mean_ /= Scalar(prompt.size());
    decayed_ = Vec::Zero(d);
  }

  void push(TokenId token) {
    decayed_ *= Scalar(kPrefixDecay);
    decayed_ += params_->token_embeddings.row(token).transpose();
    ++length_;
  }

  void state(Phase phase, Vec& out) const {
    const int d = static_cast<int>(prompt_mean_.size());
    out.resize(2 * d + 2);
    out.head(d) = prompt_mean_;
    out.segment(d, d) = decayed_;
    out(2 * d) = Scalar(length_) / Scalar(kMaxSemantic + kSceneLength);
    out(2 * d + 1) = phase == Phase::Semantic ? Scalar(0) : Scalar(1);
  }

  int length() const { return length_; }

 private:
  const Params* params_;
  Vec prompt_mean_;
  Vec decayed_;
  int length_ = 0;
};

/// Hidden activations and phase-restricted log-probabilities for one state.
/// Every forward evaluation goes through here so sampled and teacher-forced
/// log-probabilities agree bitwise.
template <typename Scalar>
void forward_position(const BasicPolicyParams<Scalar>& params,
                      const typename BasicPolicyParams<Scalar>::Vector& state, Phase phase,
                      typename BasicPolicyParams<Scalar>::Vector& hidden,
                      typename BasicPolicyParams<Scalar>::Vector& logprobs) {
  hidden.noalias() = params.hidden_weights.transpose() * state;
  hidden += params.hidden_bias;
  hidden = hidden.array().tanh().matrix();
  const Range r = phase_range(params.shape, phase);
  logprobs.noalias() = params.output_weights.middleCols(r.begin, r.size).transpose() * hidden;
  logprobs += params.output_bias.segment(r.begin, r.size);
  log_softmax_inplace(logprobs);
}

}  // namespace detail

/// Conditioning features for the next token: prompt-embedding mean, decayed
/// prefix sum (oldest token decayed most), normalized position, phase flag.
template <typename Scalar>
typename BasicPolicyParams<Scalar>::Vector context_state(const BasicPolicyParams<Scalar>& params,
                                                         std::span<const TokenId> prompt,
                                                         std::span<const TokenId> prefix,
                                                         Phase phase) {
  detail::ContextCursor<Scalar> cursor(params, prompt);
  for (TokenId t : prefix) cursor.push(t);
  typename BasicPolicyParams<Scalar>::Vector state;
  cursor.state(phase, state);
  return state;
}

/// Full-vocabulary logits; tokens outside the phase mask are -infinity.
template <typename Scalar>
typename BasicPolicyParams<Scalar>::Vector forward_logits(
    const BasicPolicyParams<Scalar>& params,
    const typename BasicPolicyParams<Scalar>::Vector& state, Phase phase) {
  if (state.size() != params.shape.state_dim()) throw ContractViolation("state has wrong dimension");
  if (!state.allFinite()) throw NumericError("non-finite context state");
  using Vec = typename BasicPolicyParams<Scalar>::Vector;
  Vec hidden = (params.hidden_weights.transpose() * state + params.hidden_bias).array().tanh().matrix();
  Vec logits = Vec::Constant(params.shape.total_vocab(), -std::numeric_limits<Scalar>::infinity());
  const auto r = detail::phase_range(params.shape, phase);
  logits.segment(r.begin, r.size) = params.output_weights.middleCols(r.begin, r.size).transpose() * hidden +
                                    params.output_bias.segment(r.begin, r.size);
  return logits;
}

/// Semantic tokens sampled so far and the log-probabilities of a prefix of them.
struct SemanticDraft {
  std::vector<TokenId> tokens;
  std::vector<double> logprobs;
};

namespace detail {

inline TokenId sample_index(const Vector& logprobs, int begin, Rng& rng) {
  const double u = rng.uniform();
  double cum = 0;
  for (Eigen::Index k = 0; k < logprobs.size(); ++k) {
    cum += std::exp(logprobs[k]);
    if (u < cum) return begin + static_cast<TokenId>(k);
  }
  // Round-off left u above the total mass; take the last token with mass.
  for (Eigen::Index k = logprobs.size() - 1; k >= 0; --k) {
    if (logprobs[k] > -std::numeric_limits<double>::infinity()) return begin + static_cast<TokenId>(k);
  }
  return begin;
}

}  // namespace detail

/// Samples semantic tokens until end-of-CoT or `max_tokens` tokens.
inline SemanticDraft sample_semantic(const PolicyParams& params, std::span<const TokenId> prompt,
                                     Rng& rng, int max_tokens = kMaxSemantic) {
  detail::check_tokens(params.shape, prompt, {}, {});
  SemanticDraft draft;
  detail::ContextCursor<double> cursor(params, prompt);
  Vector state, hidden, logprobs;
  const auto r = detail::phase_range(params.shape, Phase::Semantic);
  const TokenId eoc = params.shape.end_of_cot();
  while (static_cast<int>(draft.tokens.size()) < std::min(max_tokens, kMaxSemantic)) {
    cursor.state(Phase::Semantic, state);
    detail::forward_position(params, state, Phase::Semantic, hidden, logprobs);
    const TokenId tok = detail::sample_index(logprobs, r.begin, rng);
    draft.tokens.push_back(tok);
    draft.logprobs.push_back(logprobs[tok - r.begin]);
    cursor.push(tok);
    if (tok == eoc) break;
  }
  return draft;
}

/// Scores the semantic tokens whose log-probabilities the draft lacks, then
/// samples exactly kSceneLength scene tokens conditioned on the full CoT.
inline Rollout complete_rollout(const PolicyParams& params, std::span<const TokenId> prompt,
                                SemanticDraft draft, Rng& scene_rng, std::uint64_t seed = 0) {
  detail::check_tokens(params.shape, prompt, draft.tokens, {});
  if (draft.logprobs.size() > draft.tokens.size()) {
    throw ContractViolation("draft has more log-probabilities than tokens");
  }
  Rollout out;
  out.seed = seed;
  out.prompt_tokens.assign(prompt.begin(), prompt.end());
  out.logprob_new = std::move(draft.logprobs);
  detail::ContextCursor<double> cursor(params, prompt);
  Vector state, hidden, logprobs;
  const auto rs = detail::phase_range(params.shape, Phase::Semantic);
  for (std::size_t j = 0; j < draft.tokens.size(); ++j) {
    if (j >= out.logprob_new.size()) {
      cursor.state(Phase::Semantic, state);
      detail::forward_position(params, state, Phase::Semantic, hidden, logprobs);
      out.logprob_new.push_back(logprobs[draft.tokens[j] - rs.begin]);
    }
    cursor.push(draft.tokens[j]);
  }
  out.semantic_tokens = std::move(draft.tokens);
  const auto rt = detail::phase_range(params.shape, Phase::Scene);
  out.scene_tokens.reserve(kSceneLength);
  for (int j = 0; j < kSceneLength; ++j) {
    cursor.state(Phase::Scene, state);
    detail::forward_position(params, state, Phase::Scene, hidden, logprobs);
    const TokenId tok = detail::sample_index(logprobs, rt.begin, scene_rng);
    out.scene_tokens.push_back(tok);
    out.logprob_new.push_back(logprobs[tok - rt.begin]);
    cursor.push(tok);
  }
  return out;
}

/// Independent semantic and scene streams of one rollout seed. The scene
/// stream does not depend on how many semantic draws were made, so a rollout
/// with and without CoT share scene randomness.
struct RolloutStreams {
  Rng semantic;
  Rng scene;
  explicit RolloutStreams(std::uint64_t seed)
      : semantic(derive_seed(seed, {0})), scene(derive_seed(seed, {1})) {}
};

/// Temperature-1 ancestral sampling of o = (s, t).
inline Rollout sample_rollout(const PolicyParams& params, std::span<const TokenId> prompt,
                              std::uint64_t seed) {
  RolloutStreams streams(seed);
  auto draft = sample_semantic(params, prompt, streams.semantic);
  return complete_rollout(params, prompt, std::move(draft), streams.scene, seed);
}

/// Teacher-forced forward pass over one (prompt, s, t) sequence that keeps
/// what the reverse pass needs. With a reference policy it also records the
/// exact per-position KL(params || reference).
template <typename Scalar>
class SequenceTape {
 public:
  using Params = BasicPolicyParams<Scalar>;
  using Vec = typename Params::Vector;
  using Mat = typename Params::Matrix;

  SequenceTape(const Params& params, const Params* reference, std::span<const TokenId> prompt,
               std::span<const TokenId> s, std::span<const TokenId> t)
      : params_(&params), prompt_(prompt.begin(), prompt.end()) {
    if (reference && !(reference->shape == params.shape)) {
      throw DataError("reference policy has different dimensions");
    }
    detail::check_tokens(params.shape, prompt, s, t);
    tokens_.assign(s.begin(), s.end());
    tokens_.insert(tokens_.end(), t.begin(), t.end());
    num_semantic_ = static_cast<int>(s.size());
    const int n = static_cast<int>(tokens_.size());
    const int h = static_cast<int>(params.shape.hidden_dim);
    const auto rs = detail::phase_range(params.shape, Phase::Semantic);
    const auto rt = detail::phase_range(params.shape, Phase::Scene);

    states_.resize(params.shape.state_dim(), n);
    hidden_.resize(h, n);
    probs_sem_.resize(rs.size, num_semantic_);
    probs_scene_.resize(rt.size, n - num_semantic_);
    logprob_.resize(n);
    if (reference) {
      kl_.resize(n);
      kl_terms_sem_.resize(rs.size, num_semantic_);
      kl_terms_scene_.resize(rt.size, n - num_semantic_);
    }

    detail::ContextCursor<Scalar> cursor(params, prompt);
    std::optional<detail::ContextCursor<Scalar>> ref_cursor;
    if (reference) ref_cursor.emplace(*reference, prompt);
    Vec state, hid, lp, ref_state, ref_hid, lq;
    for (int j = 0; j < n; ++j) {
      const Phase phase = j < num_semantic_ ? Phase::Semantic : Phase::Scene;
      const auto r = j < num_semantic_ ? rs : rt;
      const int col = j < num_semantic_ ? j : j - num_semantic_;
      cursor.state(phase, state);
      detail::forward_position(params, state, phase, hid, lp);
      states_.col(j) = state;
      hidden_.col(j) = hid;
      logprob_[j] = lp[tokens_[j] - r.begin];
      Vec p = lp.array().exp().matrix();
      if (reference) {
        ref_cursor->state(phase, ref_state);
        detail::forward_position(*reference, ref_state, phase, ref_hid, lq);
        // KL(p || q) = sum p (log p - log q); the per-token terms are kept for
        // the gradient p * (log p - log q - KL).
        Vec diff = lp - lq;
        const Scalar kl = p.dot(diff);
        kl_[j] = kl;
        Vec terms = (p.array() * (diff.array() - kl)).matrix();
        (j < num_semantic_ ? kl_terms_sem_ : kl_terms_scene_).col(col) = terms;
        ref_cursor->push(tokens_[j]);
      }
      (j < num_semantic_ ? probs_sem_ : probs_scene_).col(col) = p;
      cursor.push(tokens_[j]);
    }
  }

  std::span<const Scalar> logprobs() const { return logprob_; }
  std::span<const Scalar> kl() const { return kl_; }
  int size() const { return static_cast<int>(tokens_.size()); }

  /// grad += d/dparams [ sum_j lp_weights[j] * log p_j + kl_weights[j] * KL_j ].
  /// Either weight span may be empty (treated as zeros).
  void backward(std::span<const Scalar> lp_weights, std::span<const Scalar> kl_weights,
                Params& grad) const {
    const int n = size();
    if (!lp_weights.empty() && static_cast<int>(lp_weights.size()) != n) {
      throw ContractViolation("log-prob weight count must equal sequence length");
    }
    if (!kl_weights.empty()) {
      if (static_cast<int>(kl_weights.size()) != n) {
        throw ContractViolation("KL weight count must equal sequence length");
      }
      if (kl_.size() != static_cast<std::size_t>(n)) throw ContractViolation("tape has no reference policy");
    }
    for (Scalar w : lp_weights) {
      if (!std::isfinite(static_cast<double>(w))) throw NumericError("non-finite log-prob weight");
    }
    for (Scalar w : kl_weights) {
      if (!std::isfinite(static_cast<double>(w))) throw NumericError("non-finite KL weight");
    }
    if (n == 0) return;
    const Params& p = *params_;
    const auto rs = detail::phase_range(p.shape, Phase::Semantic);
    const auto rt = detail::phase_range(p.shape, Phase::Scene);
    const int h = static_cast<int>(p.shape.hidden_dim);

    // Logit adjoints per phase: w (onehot - p) + v * p (log p - log q - KL).
    Mat d_hidden(h, n);
    const auto phase_backward = [&](const Mat& probs, const Mat& kl_terms, detail::Range r, int offset,
                                    int count) {
      if (count == 0) return;
      Mat g(r.size, count);
      for (int c = 0; c < count; ++c) {
        const int j = offset + c;
        const Scalar w = lp_weights.empty() ? Scalar(0) : lp_weights[j];
        g.col(c) = -w * probs.col(c);
        g(tokens_[j] - r.begin, c) += w;
        if (!kl_weights.empty()) g.col(c) += kl_weights[j] * kl_terms.col(c);
      }
      const auto h_cols = hidden_.middleCols(offset, count);
      grad.output_weights.middleCols(r.begin, r.size).noalias() += h_cols * g.transpose();
      grad.output_bias.segment(r.begin, r.size) += g.rowwise().sum();
      d_hidden.middleCols(offset, count).noalias() = p.output_weights.middleCols(r.begin, r.size) * g;
    };
    phase_backward(probs_sem_, kl_terms_sem_, rs, 0, num_semantic_);
    phase_backward(probs_scene_, kl_terms_scene_, rt, num_semantic_, n - num_semantic_);

    const Mat d_pre = (d_hidden.array() * (Scalar(1) - hidden_.array().square())).matrix();
    grad.hidden_weights.noalias() += states_ * d_pre.transpose();
    grad.hidden_bias += d_pre.rowwise().sum();
    const Mat d_state = p.hidden_weights * d_pre;

    const int d = static_cast<int>(p.shape.embedding_dim);
    if (!prompt_.empty()) {
      const Vec d_prompt = d_state.topRows(d).rowwise().sum() / Scalar(prompt_.size());
      for (TokenId x : prompt_) grad.token_embeddings.row(x) += d_prompt.transpose();
    }
    // decayed_j = 0.9 decayed_{j-1} + e_{j-1}: sweep adjoints from the end.
    Vec carry = Vec::Zero(d);
    for (int j = n - 1; j >= 0; --j) {
      grad.token_embeddings.row(tokens_[j]) += carry.transpose();
      carry = Scalar(kPrefixDecay) * carry + d_state.col(j).segment(d, d);
    }
  }

 private:
  const Params* params_;
  std::vector<TokenId> prompt_;
  std::vector<TokenId> tokens_;
  int num_semantic_ = 0;
  Mat states_, hidden_;
  Mat probs_sem_, probs_scene_;
  Mat kl_terms_sem_, kl_terms_scene_;
  std::vector<Scalar> logprob_;
  std::vector<Scalar> kl_;
};

/// Per-position log-probabilities of the recorded tokens (teacher forcing).
template <typename Scalar>
std::vector<Scalar> logprob_sequence(const BasicPolicyParams<Scalar>& params,
                                     std::span<const TokenId> prompt, std::span<const TokenId> s,
                                     std::span<const TokenId> t) {
  SequenceTape<Scalar> tape(params, nullptr, prompt, s, t);
  const auto lp = tape.logprobs();
  return {lp.begin(), lp.end()};
}

/// Gradient of sum_j weights[j] * log pi(token_j | prefix_j).
template <typename Scalar>
BasicPolicyParams<Scalar> grad_logprob_sum(const BasicPolicyParams<Scalar>& params,
                                           std::span<const TokenId> prompt,
                                           std::span<const TokenId> s, std::span<const TokenId> t,
                                           std::span<const Scalar> weights) {
  SequenceTape<Scalar> tape(params, nullptr, prompt, s, t);
  auto grad = params.zeros_like();
  tape.backward(weights, {}, grad);
  return grad;
}

/// Exact per-position KL(pi_a || pi_b) over the phase-masked vocabulary.
template <typename Scalar>
std::vector<Scalar> kl_exact(const BasicPolicyParams<Scalar>& params_a,
                             const BasicPolicyParams<Scalar>& params_b,
                             std::span<const TokenId> prompt, std::span<const TokenId> s,
                             std::span<const TokenId> t) {
  SequenceTape<Scalar> tape(params_a, &params_b, prompt, s, t);
  const auto kl = tape.kl();
  return {kl.begin(), kl.end()};
}

/// Gradient with respect to params_a of sum_j weights[j] * KL_j.
template <typename Scalar>
BasicPolicyParams<Scalar> grad_kl_sum(const BasicPolicyParams<Scalar>& params_a,
                                      const BasicPolicyParams<Scalar>& params_b,
                                      std::span<const TokenId> prompt, std::span<const TokenId> s,
                                      std::span<const TokenId> t, std::span<const Scalar> weights) {
  SequenceTape<Scalar> tape(params_a, &params_b, prompt, s, t);
  auto grad = params_a.zeros_like();
  tape.backward({}, weights, grad);
  return grad;
}

}  // namespace shortcot
