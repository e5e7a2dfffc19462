#include "hrvvs/decoder.hpp"

#include <string>
#include <vector>

#include "hrvvs/errors.hpp"

namespace hrvvs {

std::vector<double> class_indicator(const Mask& mask, int cls) {
  std::vector<double> out(mask.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mask.labels[i] == cls ? 1.0 : 0.0;
  return out;
}

namespace decoder {

std::array<Var, views::kLocalViews> DecoderPyramid::penultimate_locals() const {
  std::array<Var, views::kLocalViews> out;
  for (std::size_t m = 0; m < out.size(); ++m) out[m] = views[m].penultimate;
  return out;
}

Decoder::Decoder(ParamStore& store, const std::array<int, encoder::kStages>& channels, int classes, Rng& rng)
    : channels_(channels), classes_(classes) {
  if (classes_ < 2) throw ConfigError("decoder: need at least two classes");
  for (int i = 1; i < encoder::kStages; ++i) {
    const std::size_t s = static_cast<std::size_t>(i - 1);
    const std::string base = "decoder.stage" + std::to_string(i);
    up_[s] = Conv2d(store, base + ".up", channels_[s + 1], channels_[s], 3, 1, rng);
    refine_[s] = Conv2d(store, base + ".refine", channels_[s], channels_[s], 3, 1, rng);
  }
  penultimate_ = Conv2d(store, "decoder.penultimate", channels_[0], channels_[0], 3, 1, rng);
  head_ = Conv2d(store, "decoder.head", channels_[0], classes_, 3, 1, rng, Init::Xavier);
}

DecodedView Decoder::decode_view(const Var& entry, const encoder::ViewFeatures* skips) const {
  if (entry.shape().size() != 3 || entry.dim(0) != channels_.back())
    throw ConfigError("decoder: entry feature " + shape_string(entry.shape()) + " has the wrong width");
  DecodedView out;
  out.stages.back() = entry;
  Var x = entry;
  for (int i = encoder::kStages - 1; i >= 1; --i) {
    const std::size_t s = static_cast<std::size_t>(i - 1);
    x = relu(up_[s](resize_bilinear(x, 2 * x.dim(1), 2 * x.dim(2))));
    if (skips) {
      const Var& skip = (*skips)[s];
      if (skip.shape() != x.shape())
        throw ConfigError("decoder: skip " + shape_string(skip.shape()) + " vs " + shape_string(x.shape()));
      x = add(x, skip);
    }
    x = relu(refine_[s](x));
    out.stages[s] = x;
  }
  out.penultimate = relu(penultimate_(x));
  return out;
}

DecoderPyramid Decoder::decode(const encoder::FeaturePyramid& pyramid, const msim::MsimOutput& entry,
                               bool use_skips) const {
  DecoderPyramid out;
  for (int m = 0; m < encoder::kViews; ++m) {
    const std::size_t s = static_cast<std::size_t>(m);
    const Var& in = m < views::kLocalViews ? entry.locals[s] : entry.g_msim;
    out.views[s] = decode_view(in, use_skips ? &pyramid.views[s] : nullptr);
  }
  return out;
}

Var Decoder::predict(const DecoderPyramid& decoded, const Var& weights, int frame_h, int frame_w) const {
  if (!weights.defined()) throw ContractViolation("predict: fusion weights missing for this frame");
  const auto locals = decoded.penultimate_locals();
  const Var fused = views::stitch_fused(locals, decoded.penultimate_global(), weights);
  return resize_bilinear(head_(fused), frame_h, frame_w);
}

Mask argmax_mask(const Tensor& logits) {
  if (logits.rank() != 3) throw ContractViolation("argmax_mask: expected K×H×W logits");
  const int k = logits.dim(0), h = logits.dim(1), w = logits.dim(2);
  Mask m(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int best = 0;
      for (int c = 1; c < k; ++c)
        if (logits.at(c, y, x) > logits.at(best, y, x)) best = c;
      m.at(y, x) = static_cast<std::uint8_t>(best);
    }
  return m;
}

Var segmentation_loss(const Var& logits, const Mask& target) {
  if (logits.shape().size() != 3 || logits.dim(1) != target.height || logits.dim(2) != target.width)
    throw ContractViolation("segmentation_loss: logits and mask sizes differ");
  const int k = logits.dim(0);
  std::vector<int> labels(target.labels.begin(), target.labels.end());
  for (int v : labels)
    if (v >= k) throw ContractViolation("segmentation_loss: label exceeds class count");
  const Var ce = cross_entropy_pixels(logits, labels);
  const Var probs = softmax_channels(logits);
  constexpr double kEps = 1.0;
  Var dice_sum;
  for (int c = 1; c < k; ++c) {
    const Var p = select_channel(probs, c);
    const Var g = Var::constant(Tensor({1, target.height, target.width}, class_indicator(target, c)));
    const Var inter = add_scalar(scale(sum(mul(p, g)), 2.0), kEps);
    const Var denom = add_scalar(add(sum(p), sum(g)), kEps);
    // 1 − inter/denom, with the division written as inter · denom^-1.
    const Var ratio = mul(inter, reciprocal(denom));
    dice_sum = dice_sum.defined() ? add(dice_sum, ratio) : ratio;
  }
  const Var dice_loss = add_scalar(scale(dice_sum, -1.0 / (k - 1)), 1.0);
  return add(ce, dice_loss);
}

}  // namespace decoder
}  // namespace hrvvs
