#pragma once

#include <array>

#include "hrvvs/encoder.hpp"
#include "hrvvs/mask.hpp"
#include "hrvvs/msim.hpp"

namespace hrvvs::decoder {

inline constexpr int kClasses = 3;  // background + two vessel classes

struct DecodedView {
  std::array<Var, encoder::kStages> stages;  // stage 1 first; stage 5 is the decoder input
  Var penultimate;                           // C_1 × h/2 × w/2, before the prediction head
};

struct DecoderPyramid {
  std::array<DecodedView, encoder::kViews> views;  // TL, TR, BL, BR, global

  std::array<Var, views::kLocalViews> penultimate_locals() const;
  const Var& penultimate_global() const { return views[views::kLocalViews].penultimate; }
};

/// Mirror of the encoder: bilinear ×2, conv + ReLU, add the encoder skip,
/// conv + ReLU; the same weights decode every view.
class Decoder {
 public:
  Decoder(ParamStore& store, const std::array<int, encoder::kStages>& channels, int classes, Rng& rng);

  int classes() const { return classes_; }

  DecodedView decode_view(const Var& entry, const encoder::ViewFeatures* skips) const;

  /// Entry features: MSIM-updated locals and G_msim. `use_skips` = false
  /// drops the encoder residuals (used to show they matter).
  DecoderPyramid decode(const encoder::FeaturePyramid& pyramid, const msim::MsimOutput& entry,
                        bool use_skips = true) const;

  /// Stitches penultimate locals with the penultimate global using the
  /// fusion weights, then maps to class logits at frame_h × frame_w.
  Var predict(const DecoderPyramid& decoded, const Var& weights, int frame_h, int frame_w) const;

 private:
  std::array<int, encoder::kStages> channels_;
  int classes_;
  std::array<Conv2d, encoder::kStages - 1> up_, refine_;  // index i-1 produces stage i
  Conv2d penultimate_, head_;
};

/// Per-pixel argmax of K×H×W logits.
Mask argmax_mask(const Tensor& logits);

/// Cross entropy + soft Dice (ε = 1) over the vessel classes, equal weights.
Var segmentation_loss(const Var& logits, const Mask& target);

}  // namespace hrvvs::decoder
