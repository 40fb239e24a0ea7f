#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "shortcot/grpo.hpp"
#include "shortcot/policy.hpp"

namespace shortcot {

/// Everything beyond the policy that a resumed run needs.
struct TrainingState {
  PolicyParams reference;
  AdamState optimizer;
  std::uint32_t epoch = 0;
  std::uint64_t global_step = 0;
};

struct Checkpoint {
  PolicyParams params;
  std::optional<TrainingState> training;
};

/// Binary layout (all little-endian):
///   "SCOTI1"
///   u32 semantic_vocab, scene_vocab, prompt_vocab, embedding_dim, hidden_dim
///   f64 parameters: embeddings, hidden weights, hidden bias, output weights,
///       output bias; matrices row-major
/// optionally followed by a training-state section:
///   "TRST" u32 epoch, u64 global_step, u64 adam_step,
///   then reference params, first moments, second moments (same f64 layout).
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
/// Throws DataError naming the byte offset of the first problem.
Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes);

/// Writes to a temporary sibling and renames it into place, so the file is
/// either complete or absent.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace shortcot
