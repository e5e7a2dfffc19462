#include "hrvvs/encoder.hpp"

#include <string>

#include "hrvvs/errors.hpp"
#include "hrvvs/memory.hpp"

namespace hrvvs::encoder {

void validate(const StageConfig& config) {
  if (config.in_channels < 1) throw ConfigError("encoder: input channels must be positive");
  for (int i = 0; i < kStages; ++i) {
    const int c = config.channels[static_cast<std::size_t>(i)];
    if (c < 1) throw ConfigError("encoder: stage channels must be positive");
    if (i > 0 && c < config.channels[static_cast<std::size_t>(i - 1)])
      throw ConfigError("encoder: stage channels must be non-decreasing");
  }
}

Encoder::Encoder(ParamStore& store, const StageConfig& config, Rng& rng) : config_(config) {
  validate(config_);
  int in = config_.in_channels;
  for (int i = 0; i < kStages; ++i) {
    const std::size_t s = static_cast<std::size_t>(i);
    const std::string base = "encoder.stage" + std::to_string(i + 1);
    down_[s] = Conv2d(store, base + ".down", in, config_.channels[s], 3, 2, rng);
    refine_[s] = Conv2d(store, base + ".refine", config_.channels[s], config_.channels[s], 3, 1, rng);
    in = config_.channels[s];
  }
}

std::vector<std::pair<int, int>> Encoder::stage_sizes(int h, int w) {
  std::vector<std::pair<int, int>> sizes;
  for (int i = 1; i <= kStages; ++i) {
    if (h % (1 << i) || w % (1 << i)) throw InputError("encoder: view size must be divisible by 32");
    sizes.emplace_back(h >> i, w >> i);
  }
  return sizes;
}

ViewFeatures Encoder::encode_view(const Var& view, const std::vector<Var>* priors) const {
  if (view.shape().size() != 3 || view.dim(0) != config_.in_channels)
    throw InputError("encoder: view has shape " + shape_string(view.shape()));
  stage_sizes(view.dim(1), view.dim(2));  // rejects sizes the pyramid cannot halve five times
  if (priors && priors->size() != kStages) throw ConfigError("encoder: expected five priors per view");
  ViewFeatures out;
  Var x = view;
  for (int i = 0; i < kStages; ++i) {
    const std::size_t s = static_cast<std::size_t>(i);
    x = relu(refine_[s](relu(down_[s](x))));
    if (priors && config_.inject[s]) {
      const Var& p = (*priors)[s];
      if (p.shape() != x.shape())
        throw ConfigError("encoder: prior " + shape_string(p.shape()) + " does not match stage " +
                          shape_string(x.shape()));
      x = add(x, p);
    }
    out[s] = x;
  }
  return out;
}

FeaturePyramid Encoder::encode_views(const views::ViewSet& views, const PriorSet& priors) const {
  if (!priors.empty() && priors.size() != kViews) throw ConfigError("encoder: expected priors for all five views");
  FeaturePyramid pyr;
  pyr.injected = !priors.empty();
  for (int m = 0; m < kViews; ++m)
    pyr.views[static_cast<std::size_t>(m)] =
        encode_view(Var::constant(views.view(m)), priors.empty() ? nullptr : &priors[static_cast<std::size_t>(m)]);
  return pyr;
}

void store_current_global(const FeaturePyramid& pyramid, memory::MemoryBank& memory, int frame_index) {
  std::vector<Tensor> stages;
  for (const Var& v : pyramid.global()) stages.push_back(v.value());
  memory.push(std::move(stages), frame_index);
}

}  // namespace hrvvs::encoder
