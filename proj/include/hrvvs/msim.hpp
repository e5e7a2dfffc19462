#pragma once

#include <array>
#include <span>

#include "hrvvs/nn.hpp"
#include "hrvvs/views.hpp"

namespace hrvvs::msim {

struct MsimConfig {
  int heads = 4;
  double dropout = 0.1;
  bool local_positions = true;  // add (view, row, col) encodings to pooled local tokens
};

void validate(const MsimConfig& config, int channels);

struct MsimOutput {
  Var g_h;                                   // global after the history update
  Var g_msim;                                // global after the locals update
  std::array<Var, views::kLocalViews> locals;  // locals after the global update
};

/// Three residual cross-attention updates on deepest-stage features:
/// history → global, pooled locals → global, global → each local.
class Msim {
 public:
  Msim(ParamStore& store, int channels, int memory_token_dim, const MsimConfig& config, Rng& rng);

  const MsimConfig& config() const { return config_; }

  /// Empty `history` (zero rows) returns `global` unchanged.
  Var update_global_with_history(const Var& global, const Tensor& history, const ForwardContext& ctx,
                                 Tensor* probs = nullptr) const;
  Var update_global_with_locals(const Var& g_h, std::span<const Var> locals, const ForwardContext& ctx,
                                Tensor* probs = nullptr) const;
  std::array<Var, views::kLocalViews> update_locals(std::span<const Var> locals, const Var& g_msim,
                                                    const ForwardContext& ctx) const;

  MsimOutput operator()(const Var& global, std::span<const Var> locals, const Tensor& history,
                        const ForwardContext& ctx) const;

  /// Pooled local tokens (scales 1, 1/2, 1/4 per view, clamped to ≥ 1 cell).
  Var pooled_local_tokens(std::span<const Var> locals) const;

  const CrossAttention& history_attention() const { return history_; }
  const CrossAttention& locals_attention() const { return from_locals_; }
  const CrossAttention& global_attention() const { return to_locals_; }

 private:
  Var residual(const Var& base_tokens, const Var& update, const ForwardContext& ctx) const;

  MsimConfig config_;
  int channels_;
  CrossAttention history_, from_locals_, to_locals_;
};

}  // namespace hrvvs::msim
