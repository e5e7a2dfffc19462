#pragma once

#include <array>
#include <utility>
#include <vector>

#include "hrvvs/nn.hpp"
#include "hrvvs/views.hpp"

namespace hrvvs::memory {
class MemoryBank;
}

namespace hrvvs::encoder {

inline constexpr int kStages = 5;
inline constexpr int kViews = views::kLocalViews + 1;

struct StageConfig {
  std::array<int, kStages> channels{16, 32, 64, 128, 256};
  int in_channels = 3;
  std::array<bool, kStages> inject{true, true, true, true, true};  // stages that receive priors
};

void validate(const StageConfig& config);

/// Stage outputs of one view, stage 1 first.
using ViewFeatures = std::array<Var, kStages>;

struct FeaturePyramid {
  std::array<ViewFeatures, kViews> views;  // TL, TR, BL, BR, global
  bool injected = false;

  const Var& at(int view, int stage) const {
    return views[static_cast<std::size_t>(view)][static_cast<std::size_t>(stage)];
  }
  const ViewFeatures& global() const { return views[views::kLocalViews]; }
};

/// Per view, five already-projected prior maps (stage 1 first).
using PriorSet = std::vector<std::vector<Var>>;

/// Stride-2 convolutional pyramid shared across all five views. Each stage
/// is conv3×3/2 + ReLU, conv3×3 + ReLU, then the optional additive prior.
class Encoder {
 public:
  Encoder(ParamStore& store, const StageConfig& config, Rng& rng);

  const StageConfig& config() const { return config_; }

  /// Spatial size of every stage for a view of h×w.
  static std::vector<std::pair<int, int>> stage_sizes(int h, int w);

  ViewFeatures encode_view(const Var& view, const std::vector<Var>* priors = nullptr) const;

  /// `priors` is empty when the prior branch is disabled, else one entry
  /// per view.
  FeaturePyramid encode_views(const views::ViewSet& views, const PriorSet& priors) const;

 private:
  StageConfig config_;
  std::array<Conv2d, kStages> down_, refine_;
};

/// Pushes detached copies of every global stage of the current frame.
void store_current_global(const FeaturePyramid& pyramid, memory::MemoryBank& memory, int frame_index);

}  // namespace hrvvs::encoder
