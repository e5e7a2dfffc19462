#include "hrvvs/memory.hpp"

#include <algorithm>
#include <string>

#include "hrvvs/errors.hpp"

namespace hrvvs::memory {

void validate(const MemoryConfig& config) {
  if (config.capacity < 1) throw ConfigError("memory: capacity must be at least 1");
  if (config.max_age_exponent < 0) throw ConfigError("memory: max age exponent must be non-negative");
  if (config.position_dims < 6) throw ConfigError("memory: position encoding needs at least 6 dims");
  if (config.token_stages.empty()) throw ConfigError("memory: at least one token stage required");
  int prev = 0;
  for (int s : config.token_stages) {
    if (s < 1 || s > kStages || s <= prev) throw ConfigError("memory: token stages must be increasing within 1..5");
    prev = s;
  }
}

MemoryBank::MemoryBank(MemoryConfig config, int token_channels)
    : config_(std::move(config)), token_channels_(token_channels) {
  validate(config_);
  if (token_channels_ < 1) throw ConfigError("memory: token channels must be positive");
}

void MemoryBank::push(std::vector<Tensor> stages, int frame_index) {
  if (!entries_.empty() && frame_index <= entries_.back().frame_index)
    throw ContractViolation("memory: frame index " + std::to_string(frame_index) + " is not after " +
                            std::to_string(entries_.back().frame_index));
  if (stages.size() != kStages) throw ContractViolation("memory: expected five global stages");
  MemoryEntry e;
  e.frame_index = frame_index;
  for (const Tensor& t : stages) {
    if (t.rank() != 3) throw ContractViolation("memory: stage features must be C×H×W");
    e.original_sizes.emplace_back(t.dim(1), t.dim(2));
  }
  for (int s : config_.token_stages)
    if (stages[static_cast<std::size_t>(s - 1)].dim(0) > token_channels_)
      throw ContractViolation("memory: stage wider than the token width");
  e.stages = std::move(stages);
  entries_.push_back(std::move(e));
  if (static_cast<int>(entries_.size()) > config_.capacity) {
    entries_.erase(entries_.begin());
    compress();
  }
}

void MemoryBank::compress() {
  const int n = static_cast<int>(entries_.size());
  for (int i = 0; i < n; ++i) {
    MemoryEntry& e = entries_[static_cast<std::size_t>(i)];
    const int age = n - 1 - i;
    const int factor = 1 << std::min(age, config_.max_age_exponent);
    if (factor <= e.compression) continue;
    for (std::size_t s = 0; s < e.stages.size(); ++s) {
      const auto [h, w] = e.original_sizes[s];
      const int th = std::max(1, h / factor), tw = std::max(1, w / factor);
      Tensor& t = e.stages[s];
      if (t.dim(1) != th || t.dim(2) != tw) t = adaptive_avg_pool(t, th, tw);
    }
    e.compression = factor;
  }
}

int MemoryBank::token_count() const {
  int n = 0;
  for (const MemoryEntry& e : entries_)
    for (int s : config_.token_stages) {
      const Tensor& t = e.stages[static_cast<std::size_t>(s - 1)];
      n += t.dim(1) * t.dim(2);
    }
  return n;
}

Tensor MemoryBank::tokens() const {
  const int pd = config_.position_dims;
  const int age_dims = 4, row_dims = (pd - age_dims) / 2, col_dims = pd - age_dims - row_dims;
  Tensor out({token_count(), token_dim()});
  const int n = static_cast<int>(entries_.size());
  int r = 0;
  for (int i = 0; i < n; ++i) {
    const MemoryEntry& e = entries_[static_cast<std::size_t>(i)];
    const int age = n - 1 - i;
    for (int s : config_.token_stages) {
      const Tensor& t = e.stages[static_cast<std::size_t>(s - 1)];
      const auto [oh, ow] = e.original_sizes[static_cast<std::size_t>(s - 1)];
      const int c = t.dim(0), h = t.dim(1), w = t.dim(2);
      const double cy = static_cast<double>(oh) / h, cx = static_cast<double>(ow) / w;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x, ++r) {
          double* row = out.row(r);
          for (int k = 0; k < c; ++k) row[k] = t.at(k, y, x);
          double* pe = row + token_channels_;
          sinusoid(age, age_dims, pe, 16.0);
          sinusoid((y + 0.5) * cy, row_dims, pe + age_dims, 64.0);
          sinusoid((x + 0.5) * cx, col_dims, pe + age_dims + row_dims, 64.0);
        }
    }
  }
  return out;
}

void MemoryBank::store_decoder_global(Tensor feature) { previous_global_ = std::move(feature); }

void MemoryBank::reset() {
  entries_.clear();
  previous_global_.reset();
}

}  // namespace hrvvs::memory
