#pragma once

#include <array>
#include <optional>
#include <span>

#include "hrvvs/nn.hpp"
#include "hrvvs/views.hpp"

namespace hrvvs::dwfm {

struct DwfmConfig {
  int heads = 4;
  int model_dim = 32;
  double delta = 0.9;       // history decay of the weight recursion
  int reference_grid = 8;   // reference feature is pooled to at most grid×grid tokens
  std::array<double, 3> fusion_init{1.0 / 3, 1.0 / 3, 1.0 / 3};  // initial (α, β, γ)
};

void validate(const DwfmConfig& config);

/// Per-video fusion state.
struct WeightState {
  std::optional<Tensor> history;  // W_h, 4×16
  std::optional<Tensor> last_final;
  int frame = 0;

  void reset() { *this = WeightState{}; }
};

/// W_final = W_g at t = 0, otherwise α·W_l + β·W_g + γ·W_h with
/// (α, β, γ) = coefficients (a 3-element simplex Var).
Var fuse_weights(const Var* w_l, const Var& w_g, const Tensor* w_h, int t, const Var& coefficients);

/// δ·W_h + (1 − δ)·W_final.
Tensor update_history(const Tensor& w_h, const Tensor& w_final, double delta);

class Dwfm {
 public:
  Dwfm(ParamStore& store, int channels, const DwfmConfig& config, Rng& rng);

  const DwfmConfig& config() const { return config_; }

  /// 4×16 weights in [0,1]: each patch of each local attends over the
  /// pooled reference tokens; the attended tokens are averaged per patch and
  /// mapped through a 1-unit head and a sigmoid.
  Var patch_weights(std::span<const Var> locals, const Var& reference, Tensor* probs = nullptr) const;

  /// softmax(logits) as a 3-element Var: α, β, γ.
  Var coefficients() const;
  std::array<double, 3> coefficient_values() const;

  /// Runs the per-frame recursion and advances `state`. `previous` is the
  /// decoder-level global of the previous frame (absent at t = 0).
  Var fuse(std::span<const Var> locals, const Var& current, const std::optional<Tensor>& previous,
           WeightState& state) const;

 private:
  DwfmConfig config_;
  int channels_;
  CrossAttention attn_;
  Linear head_;
  Var logits_;
};

}  // namespace hrvvs::dwfm
