#include "shortcot/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>

#include "shortcot/errors.hpp"

namespace shortcot {

namespace {

constexpr std::string_view kMagic = "SCOTI1";
constexpr std::string_view kTrainingMagic = "TRST";

class Writer {
 public:
  void bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

  template <typename Derived>
  void row_major(const Eigen::MatrixBase<Derived>& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
    }
  }

  void params(const PolicyParams& p) {
    row_major(p.token_embeddings);
    row_major(p.hidden_weights);
    row_major(p.hidden_bias);
    row_major(p.output_weights);
    row_major(p.output_bias);
  }

  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::size_t offset() const { return pos_; }
  bool at_end() const { return pos_ == in_.size(); }

  void expect(std::string_view magic, std::string_view what) {
    need(magic.size(), what);
    if (std::memcmp(in_.data() + pos_, magic.data(), magic.size()) != 0) {
      fail("bad " + std::string(what));
    }
    pos_ += magic.size();
  }
  std::uint32_t u32(std::string_view what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(std::string_view what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64(std::string_view what) { return std::bit_cast<double>(u64(what)); }

  template <typename Derived>
  void row_major(Eigen::MatrixBase<Derived>& m, std::string_view what) {
    need(8 * static_cast<std::size_t>(m.size()), what);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = f64(what);
    }
  }

  void params(PolicyParams& p, std::string_view what) {
    row_major(p.token_embeddings, what);
    row_major(p.hidden_weights, what);
    row_major(p.hidden_bias, what);
    row_major(p.output_weights, what);
    row_major(p.output_bias, what);
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw DataError("checkpoint: " + why + " at byte offset " + std::to_string(pos_));
  }

 private:
  void need(std::size_t n, std::string_view what) {
    if (in_.size() - pos_ < n) fail("truncated " + std::string(what));
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  const ModelShape& s = ckpt.params.shape;
  w.bytes(kMagic);
  w.u32(s.semantic_vocab);
  w.u32(s.scene_vocab);
  w.u32(s.prompt_vocab);
  w.u32(s.embedding_dim);
  w.u32(s.hidden_dim);
  w.params(ckpt.params);
  if (ckpt.training) {
    const TrainingState& t = *ckpt.training;
    if (!(t.reference.shape == s) || !(t.optimizer.first_moment.shape == s) ||
        !(t.optimizer.second_moment.shape == s)) {
      throw ContractViolation("training state shape differs from policy shape");
    }
    w.bytes(kTrainingMagic);
    w.u32(t.epoch);
    w.u64(t.global_step);
    w.u64(t.optimizer.step);
    w.params(t.reference);
    w.params(t.optimizer.first_moment);
    w.params(t.optimizer.second_moment);
  }
  return w.take();
}

Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.expect(kMagic, "magic");
  ModelShape shape;
  shape.semantic_vocab = r.u32("header");
  shape.scene_vocab = r.u32("header");
  shape.prompt_vocab = r.u32("header");
  shape.embedding_dim = r.u32("header");
  shape.hidden_dim = r.u32("header");
  constexpr std::uint32_t kSane = 1u << 16;
  if (shape.semantic_vocab == 0 || shape.scene_vocab == 0 || shape.prompt_vocab == 0 ||
      shape.embedding_dim == 0 || shape.hidden_dim == 0 || shape.semantic_vocab > kSane ||
      shape.scene_vocab > kSane || shape.prompt_vocab > kSane || shape.embedding_dim > kSane ||
      shape.hidden_dim > kSane) {
    r.fail("implausible header dimensions");
  }
  Checkpoint ckpt;
  ckpt.params = PolicyParams::zeros(shape);
  r.params(ckpt.params, "parameters");
  if (!r.at_end()) {
    TrainingState t;
    r.expect(kTrainingMagic, "training-state marker");
    t.epoch = r.u32("training state");
    t.global_step = r.u64("training state");
    t.optimizer = AdamState::zeros_like(ckpt.params);
    t.optimizer.step = r.u64("training state");
    t.reference = PolicyParams::zeros(shape);
    r.params(t.reference, "reference parameters");
    r.params(t.optimizer.first_moment, "optimizer moments");
    r.params(t.optimizer.second_moment, "optimizer moments");
    if (!r.at_end()) r.fail("trailing bytes");
    ckpt.params.version = t.optimizer.step;
    ckpt.training = std::move(t);
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(ckpt);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw DataError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_checkpoint(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace shortcot
