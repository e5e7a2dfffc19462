#include "hrvvs/views.hpp"

#include "hrvvs/errors.hpp"

namespace hrvvs::views {

void validate_frame(const Tensor& frame) {
  if (frame.rank() != 3 || frame.dim(0) < 1)
    throw InputError("frame must be C×H×W with at least one channel, got " + shape_string(frame.shape()));
  if (frame.dim(1) % kFrameAlignment || frame.dim(2) % kFrameAlignment || frame.dim(1) == 0 || frame.dim(2) == 0)
    throw InputError("frame sides must be positive multiples of 64, got " + shape_string(frame.shape()));
}

ViewSet decompose(const FullFrame& frame) { return decompose(frame.data); }

ViewSet decompose(const Tensor& frame) {
  validate_frame(frame);
  const int h = frame.dim(1) / 2, w = frame.dim(2) / 2;
  ViewSet out;
  for (int m = 0; m < kLocalViews; ++m)
    out.locals[static_cast<std::size_t>(m)] = crop(frame, (m / 2) * h, (m % 2) * w, h, w);
  out.global_view = resize_bilinear(frame, h, w);
  return out;
}

Tensor assemble_quadrants(std::span<const Tensor> locals) {
  if (locals.size() != kLocalViews) throw ContractViolation("assemble_quadrants: need four locals");
  const Tensor& first = locals[0];
  Tensor out({first.dim(0), first.dim(1) * 2, first.dim(2) * 2});
  for (int m = 0; m < kLocalViews; ++m) {
    if (locals[static_cast<std::size_t>(m)].shape() != first.shape())
      throw ContractViolation("assemble_quadrants: locals differ in shape");
    paste(out, locals[static_cast<std::size_t>(m)], (m / 2) * first.dim(1), (m % 2) * first.dim(2));
  }
  return out;
}

namespace {

void check_patchable(const Shape& s) {
  if (s.size() != 3) throw InputError("split_patches: expected C×h×w, got " + shape_string(s));
  if (s[1] % kPatchGrid || s[2] % kPatchGrid || s[1] == 0 || s[2] == 0)
    throw InputError("split_patches: sides must be divisible by 4, got " + shape_string(s));
}

}  // namespace

std::vector<Tensor> split_patches(const Tensor& local) {
  check_patchable(local.shape());
  const int ph = local.dim(1) / kPatchGrid, pw = local.dim(2) / kPatchGrid;
  std::vector<Tensor> out;
  out.reserve(kPatchesPerLocal);
  for (int p = 0; p < kPatchesPerLocal; ++p)
    out.push_back(crop(local, (p / kPatchGrid) * ph, (p % kPatchGrid) * pw, ph, pw));
  return out;
}

std::vector<Var> split_patches(const Var& local) {
  check_patchable(local.shape());
  const int ph = local.dim(1) / kPatchGrid, pw = local.dim(2) / kPatchGrid;
  std::vector<Var> out;
  out.reserve(kPatchesPerLocal);
  for (int p = 0; p < kPatchesPerLocal; ++p)
    out.push_back(crop(local, (p / kPatchGrid) * ph, (p % kPatchGrid) * pw, ph, pw));
  return out;
}

Tensor join_patches(std::span<const Tensor> patches) {
  if (patches.size() != kPatchesPerLocal) throw ContractViolation("join_patches: need 16 patches");
  const Tensor& first = patches[0];
  Tensor out({first.dim(0), first.dim(1) * kPatchGrid, first.dim(2) * kPatchGrid});
  for (int p = 0; p < kPatchesPerLocal; ++p)
    paste(out, patches[static_cast<std::size_t>(p)], (p / kPatchGrid) * first.dim(1), (p % kPatchGrid) * first.dim(2));
  return out;
}

Var expand_patch_weights(const Var& weights, int frame_h, int frame_w) {
  if (weights.value().size() != static_cast<std::size_t>(kLocalViews * kPatchesPerLocal))
    throw ContractViolation("patch weights must be a 4×16 grid");
  // Convex combinations of in-range grids may land an ulp outside [0,1].
  // NaN passes through so a diverged model surfaces as a non-finite loss.
  constexpr double kSlack = 1e-12;
  for (double w : weights.value().values())
    if (w < -kSlack || w > 1.0 + kSlack) throw ContractViolation("patch weight outside [0,1]");
  if (frame_h % (2 * kPatchGrid) || frame_w % (2 * kPatchGrid))
    throw ContractViolation("expand_patch_weights: frame not divisible into 8×8 patch cells");
  const int ph = frame_h / (2 * kPatchGrid), pw = frame_w / (2 * kPatchGrid);
  // Patch index (m, p) covering pixel (y, x).
  auto index_of = [ph, pw](int y, int x) {
    const int gy = y / ph, gx = x / pw;  // 0..7 over the full frame
    const int m = (gy / kPatchGrid) * 2 + gx / kPatchGrid;
    const int p = (gy % kPatchGrid) * kPatchGrid + gx % kPatchGrid;
    return m * kPatchesPerLocal + p;
  };
  Tensor map({frame_h, frame_w});
  for (int y = 0; y < frame_h; ++y)
    for (int x = 0; x < frame_w; ++x) map.at(y, x) = weights.value()[static_cast<std::size_t>(index_of(y, x))];
  return make_result(std::move(map), {weights}, [frame_h, frame_w, index_of](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (int y = 0; y < frame_h; ++y)
      for (int x = 0; x < frame_w; ++x) g[static_cast<std::size_t>(index_of(y, x))] += self.grad.at(y, x);
  });
}

Var stitch_fused(std::span<const Var> locals, const Var& global_view, const Var& weights) {
  if (locals.size() != kLocalViews) throw ContractViolation("stitch_fused: need four locals");
  if (global_view.shape() != locals[0].shape()) throw ContractViolation("stitch_fused: global/local shape mismatch");
  const Var stitched = assemble_grid(locals, 2, 2);
  const int fh = stitched.dim(1), fw = stitched.dim(2);
  const Var map = expand_patch_weights(weights, fh, fw);
  return blend(stitched, resize_bilinear(global_view, fh, fw), map);
}

Tensor stitch_fused(std::span<const Tensor> locals, const Tensor& global_view, const Tensor& weights) {
  std::vector<Var> ls;
  for (const auto& l : locals) ls.push_back(Var::constant(l));
  return stitch_fused(ls, Var::constant(global_view), Var::constant(weights)).value();
}

}  // namespace hrvvs::views
