#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "hrvvs/nn.hpp"

namespace hrvvs::toyvar {

inline constexpr int kScales = 5;

struct ToyVarConfig {
  int codebook_size = 64;  // includes the reserved all-zero code at index 0
  int code_dim = 32;
  std::array<int, kScales> scales{1, 2, 4, 8, 16};
  int input_size = 64;  // views are resampled to this side before encoding
  int decoder_channels = 32;
  int model_dim = 64;
  int heads = 4;
  int adapter_bottleneck = 16;
};

void validate(const ToyVarConfig& config);

/// Codebook indices of one scale, row-major over a side×side grid.
struct TokenMap {
  int side = 0;
  std::vector<int> indices;

  bool operator==(const TokenMap&) const = default;
};

using TokenPyramid = std::vector<TokenMap>;

struct Decoded {
  Tensor reconstruction;         // 3×input_size×input_size from all scales
  std::vector<Tensor> features;  // per scale k: decoder_channels × 2·s_k × 2·s_k
};

struct PretrainLosses {
  Var reconstruction;
  Var commitment;
  Var next_scale;
};

/// Tiny multi-scale VQ-VAE plus a next-scale token predictor.
///
/// Parameter groups:
///   toyvar.backbone.*   encoder, codebook, decoder trunk, transformer (frozen
///                       during segmentation training)
///   toyvar.adapter.*    bottleneck adapter on transformer outputs
///   toyvar.prior_proj.* 1×1 projections of decoder features to encoder
///                       stage widths (zero-initialised)
///
/// Scale k (1-based) pairs with encoder stage 6 − k, so the finest token map
/// feeds the first (highest-resolution) stage.
class ToyVar {
 public:
  ToyVar(ParamStore& store, const ToyVarConfig& config, const std::array<int, kScales>& stage_channels, Rng& rng);

  const ToyVarConfig& config() const { return config_; }
  int latent_side() const { return config_.scales.back(); }

  /// Continuous latent (code_dim × latent_side × latent_side).
  Var latent(const Tensor& image) const;

  /// Residual multi-scale quantisation of the image latent.
  TokenPyramid vq_encode(const Tensor& image) const;
  TokenPyramid quantize(const Tensor& latent) const;

  /// Sum of the box-upsampled code maps of the first `scales` token maps.
  Tensor dequantize(const TokenPyramid& tokens, int scales) const;

  Decoded vq_decode(const TokenPyramid& tokens) const;
  /// Image reconstruction using only the first `scales` token maps.
  Tensor reconstruct(const TokenPyramid& tokens, int scales) const;

  /// ‖latent − dequantize(tokens, k)‖² for k = 0..5 (k = 0 is ‖latent‖²).
  std::vector<double> cumulative_latent_errors(const Tensor& image) const;

  /// Logits (s_k² × codebook_size) for scale k ∈ [1, 5] conditioned on the
  /// start token and context[0..k−2]; entries of `context` at index ≥ k−1
  /// are ignored. Passes through the adapter when `with_adapter`.
  Var predict_next_scale(int k, const TokenPyramid& context, bool with_adapter = true) const;

  /// Teacher-forced logits for every scale.
  std::vector<Var> all_scale_logits(const TokenPyramid& tokens, bool with_adapter = true) const;

  /// Greedy scale-by-scale generation.
  TokenPyramid generate() const;

  /// Residual priors for the five encoder stages of one view, each
  /// resampled to `stage_sizes[i]` and projected to the stage width.
  std::vector<Var> extract_priors(const Tensor& view, const std::vector<std::pair<int, int>>& stage_sizes) const;

  PretrainLosses pretrain_losses(const Tensor& image) const;

  Var codebook_table() const;

 private:
  Tensor prepare(const Tensor& image) const;
  Var decoder_trunk(const Var& latent_map) const;
  Var decode_image(const Var& latent_map) const;
  /// Transformer input tokens for scales 1..k (concatenated, oldest first).
  std::vector<Var> scale_inputs(const TokenPyramid& tokens, int k) const;
  Var transformer(const Var& queries, const Var& context) const;
  Var adapter(const Var& hidden) const;

  ToyVarConfig config_;
  int patch_ = 4;
  Conv2d enc_patch_, enc_mix_;
  Var codebook_;  // (codebook_size − 1) × code_dim learnable rows
  Conv2d dec_trunk_, dec_out_;
  Var start_, scale_embed_;
  Linear in_proj_;
  CrossAttention attn_;
  LayerNorm ln_mlp_, ln_head_;
  Linear mlp_in_, mlp_out_, head_;
  Linear adapter_down_, adapter_up_;
  std::array<Conv2d, kScales> prior_proj_;  // indexed by encoder stage
};

struct PretrainOptions {
  int steps = 200;
  int batch = 4;
  double learning_rate = 2e-3;
};

struct PretrainReport {
  double initial_reconstruction = 0.0;
  double final_reconstruction = 0.0;
  double initial_next_scale = 0.0;
  double final_next_scale = 0.0;
  std::vector<double> step_losses;
};

/// Mean pretraining losses over a corpus (no parameter update).
std::pair<double, double> corpus_losses(const ToyVar& model, const std::vector<Tensor>& corpus);

/// Trains the backbone on reconstruction + commitment + next-scale cross
/// entropy (equal weights). Adapters and prior projections stay untouched.
PretrainReport pretrain(ToyVar& model, ParamStore& store, const std::vector<Tensor>& corpus,
                        const PretrainOptions& options, Rng& rng);

}  // namespace hrvvs::toyvar
