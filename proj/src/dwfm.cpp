#include "hrvvs/dwfm.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "hrvvs/errors.hpp"

namespace hrvvs::dwfm {

void validate(const DwfmConfig& config) {
  if (!(config.delta > 0.0 && config.delta < 1.0)) throw ConfigError("dwfm: delta must lie in (0, 1)");
  if (config.heads < 1 || config.model_dim % config.heads) throw ConfigError("dwfm: heads must divide model width");
  if (config.reference_grid < 1) throw ConfigError("dwfm: reference grid must be positive");
  double total = 0.0;
  for (double p : config.fusion_init) {
    if (!(p > 0.0)) throw ConfigError("dwfm: initial fusion coefficients must be positive");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6) throw ConfigError("dwfm: initial fusion coefficients must sum to 1");
}

Var fuse_weights(const Var* w_l, const Var& w_g, const Tensor* w_h, int t, const Var& coefficients) {
  if (!w_g.defined()) throw ContractViolation("fuse_weights: current-global weights missing");
  if (t == 0) return w_g;
  if (!w_l || !w_l->defined() || !w_h) throw ContractViolation("fuse_weights: t > 0 needs local and history weights");
  if (w_l->shape() != w_g.shape() || w_h->shape() != w_g.shape())
    throw ContractViolation("fuse_weights: weight grids differ in shape");
  const Var a = scale_by(*w_l, element(coefficients, 0));
  const Var b = scale_by(w_g, element(coefficients, 1));
  const Var c = scale_by(Var::constant(*w_h), element(coefficients, 2));
  return add(add(a, b), c);
}

Tensor update_history(const Tensor& w_h, const Tensor& w_final, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("update_history: delta must lie in (0, 1)");
  if (w_h.shape() != w_final.shape()) throw ContractViolation("update_history: shape mismatch");
  Tensor out(w_h.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = delta * w_h[i] + (1.0 - delta) * w_final[i];
  return out;
}

Dwfm::Dwfm(ParamStore& store, int channels, const DwfmConfig& config, Rng& rng)
    : config_(config), channels_(channels) {
  validate(config_);
  attn_ = CrossAttention(store, "dwfm.attn",
                         {.query_dim = channels,
                          .key_dim = channels,
                          .model_dim = config_.model_dim,
                          .heads = config_.heads,
                          .zero_init_output = false},
                         rng);
  head_ = Linear(store, "dwfm.head", channels, 1, rng);
  Tensor logits({3});
  for (std::size_t i = 0; i < 3; ++i) logits[i] = std::log(config_.fusion_init[i]);
  logits_ = store.create("dwfm.fusion_logits", std::move(logits));
}

Var Dwfm::patch_weights(std::span<const Var> locals, const Var& reference, Tensor* probs) const {
  if (locals.size() != views::kLocalViews) throw ContractViolation("patch_weights: expected four locals");
  if (!reference.defined()) throw ContractViolation("patch_weights: reference feature absent");
  if (reference.shape().size() != 3 || reference.dim(0) != channels_)
    throw ConfigError("patch_weights: reference width mismatch");
  std::vector<Var> queries;
  int patch_tokens = 0;
  for (const Var& local : locals) {
    if (local.dim(0) != channels_) throw ConfigError("patch_weights: local width mismatch");
    for (const Var& p : views::split_patches(local)) {
      queries.push_back(chw_to_tokens(p));
      patch_tokens = p.dim(1) * p.dim(2);
    }
  }
  const int gh = std::min(config_.reference_grid, reference.dim(1));
  const int gw = std::min(config_.reference_grid, reference.dim(2));
  const Var ref = chw_to_tokens(adaptive_avg_pool(reference, gh, gw));
  const Var attended = attn_(concat_rows(queries), ref, ref, probs);
  const Var pooled = segment_mean_rows(attended, patch_tokens);
  return reshape(sigmoid(head_(pooled)), {views::kLocalViews, views::kPatchesPerLocal});
}

Var Dwfm::coefficients() const { return reshape(softmax_rows(reshape(logits_, {1, 3})), {3}); }

std::array<double, 3> Dwfm::coefficient_values() const {
  const Tensor c = coefficients().value();
  return {c[0], c[1], c[2]};
}

Var Dwfm::fuse(std::span<const Var> locals, const Var& current, const std::optional<Tensor>& previous,
               WeightState& state) const {
  const int t = state.frame;
  const Var w_g = patch_weights(locals, current);
  Var w_final;
  if (t == 0) {
    w_final = fuse_weights(nullptr, w_g, nullptr, 0, coefficients());
    state.history = w_final.value();
  } else {
    if (!previous || !state.history) throw ContractViolation("dwfm: frame > 0 without previous global or history");
    const Var w_l = patch_weights(locals, Var::constant(*previous));
    w_final = fuse_weights(&w_l, w_g, &*state.history, t, coefficients());
    state.history = update_history(*state.history, w_final.value(), config_.delta);
  }
  state.last_final = w_final.value();
  ++state.frame;
  return w_final;
}

}  // namespace hrvvs::dwfm
