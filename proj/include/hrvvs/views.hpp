#pragma once

#include <array>
#include <span>
#include <vector>

#include "hrvvs/autograd.hpp"
#include "hrvvs/tensor.hpp"

namespace hrvvs::views {

inline constexpr int kLocalViews = 4;
inline constexpr int kPatchGrid = 4;  // patches per side within a local view
inline constexpr int kPatchesPerLocal = kPatchGrid * kPatchGrid;
inline constexpr int kFrameAlignment = 64;

struct FullFrame {
  Tensor data;  // C×H×W
  int frame_index = 0;
};

/// Four quadrant views (TL, TR, BL, BR) plus the whole frame resampled to
/// quadrant size.
struct ViewSet {
  std::array<Tensor, kLocalViews> locals;
  Tensor global_view;

  /// View m in 0..3 is a local, 4 is the global view.
  const Tensor& view(int m) const { return m < kLocalViews ? locals[static_cast<std::size_t>(m)] : global_view; }
};

/// Throws InputError unless the tensor is C×H×W with C ≥ 1 and H, W
/// multiples of 64.
void validate_frame(const Tensor& frame);

ViewSet decompose(const FullFrame& frame);
ViewSet decompose(const Tensor& frame);

/// Inverse of the quadrant split: pastes TL, TR, BL, BR into one C×2h×2w.
Tensor assemble_quadrants(std::span<const Tensor> locals);

/// 16 non-overlapping patches of a C×h×w local, row-major over the 4×4 grid.
std::vector<Tensor> split_patches(const Tensor& local);
std::vector<Var> split_patches(const Var& local);
Tensor join_patches(std::span<const Tensor> patches);

/// Expands a 4×16 per-patch weight grid into an H×W map over the full frame.
Var expand_patch_weights(const Var& weights, int frame_h, int frame_w);

/// Per-patch convex blend of the stitched locals with the global view
/// upsampled (bilinear) to full resolution:
///   out = w[m,p]·local + (1 − w[m,p])·global↑ inside patch p of quadrant m.
Var stitch_fused(std::span<const Var> locals, const Var& global_view, const Var& weights);
Tensor stitch_fused(std::span<const Tensor> locals, const Tensor& global_view, const Tensor& weights);

}  // namespace hrvvs::views
