#pragma once

#include <optional>
#include <vector>

#include "hrvvs/tensor.hpp"

namespace hrvvs::memory {

inline constexpr int kStages = 5;

struct MemoryConfig {
  int capacity = 4;            // entries kept; the oldest is dropped beyond this
  int max_age_exponent = 3;    // entry of age a is pooled by 2^min(a, max)
  int position_dims = 16;      // 4 age + 6 row + 6 column
  std::vector<int> token_stages{5};  // 1-based stages that contribute tokens
};

void validate(const MemoryConfig& config);

struct MemoryEntry {
  int frame_index = 0;
  int compression = 1;  // current pooling factor relative to the stored originals
  std::vector<Tensor> stages;                      // possibly pooled, stage 1 first
  std::vector<std::pair<int, int>> original_sizes;  // per stage, before pooling
};

/// Per-video bank of historical global features.
class MemoryBank {
 public:
  /// `token_channels` is the widest channel count among the token stages.
  MemoryBank(MemoryConfig config, int token_channels);

  const MemoryConfig& config() const { return config_; }

  /// Appends the five global stages of frame t (strictly increasing t).
  /// Exceeding capacity drops the oldest entry and recompresses by age.
  void push(std::vector<Tensor> stages, int frame_index);

  /// Pools every entry to its age schedule; idempotent.
  void compress();

  /// H_n: one row per stored position, oldest entry first, row-major within
  /// each map. Row = [feature zero-padded to token_channels(), sinusoidal
  /// (age, row, col)]. Empty bank gives a 0×token_dim() tensor.
  Tensor tokens() const;

  int token_channels() const { return token_channels_; }
  int token_dim() const { return token_channels_ + config_.position_dims; }
  /// Number of rows tokens() would return.
  int token_count() const;

  const std::vector<MemoryEntry>& entries() const { return entries_; }
  int size() const { return static_cast<int>(entries_.size()); }
  bool empty() const { return entries_.empty(); }

  /// Decoder-level global feature of the newest processed frame.
  void store_decoder_global(Tensor feature);
  const std::optional<Tensor>& previous_global() const { return previous_global_; }

  void reset();

 private:
  MemoryConfig config_;
  int token_channels_ = 0;
  std::vector<MemoryEntry> entries_;
  std::optional<Tensor> previous_global_;
};

}  // namespace hrvvs::memory
