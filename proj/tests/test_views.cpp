#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>

#include "gradcheck.hpp"
#include "hrvvs/errors.hpp"
#include "hrvvs/views.hpp"

using namespace hrvvs;
using namespace hrvvs::views;
using hrvvs::testing::random_tensor;

namespace {

Tensor quadrant_frame(int c, int h, int w) {
  Tensor f({c, h, w});
  for (int k = 0; k < c; ++k)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) f.at(k, y, x) = 1 + (y >= h / 2) * 2 + (x >= w / 2);
  return f;
}

}  // namespace

TEST_CASE("quadrants of a piecewise-constant frame are the four constants in TL, TR, BL, BR order") {
  const ViewSet v = decompose(quadrant_frame(3, 128, 128));
  for (int m = 0; m < kLocalViews; ++m) {
    CHECK(v.view(m).shape() == Shape{3, 64, 64});
    for (double x : v.view(m).values()) CHECK(x == m + 1);
  }
  CHECK(v.view(4).shape() == Shape{3, 64, 64});
}

TEST_CASE("decompose splits exact quadrants and resamples the global view") {
  Rng rng(3);
  const Tensor f = random_tensor({3, 128, 64}, rng);
  const ViewSet v = decompose(f);
  CHECK(v.global_view.shape() == Shape{3, 64, 32});
  for (int m = 0; m < kLocalViews; ++m) {
    const int y0 = (m / 2) * 64, x0 = (m % 2) * 32;
    CHECK(v.locals[static_cast<std::size_t>(m)] == crop(f, y0, x0, 64, 32));
  }
  CHECK(assemble_quadrants(v.locals) == f);
  // 2× bilinear downsampling with half-pixel centres is a 2×2 box average.
  CHECK(v.global_view.at(1, 5, 7) ==
        doctest::Approx((f.at(1, 10, 14) + f.at(1, 10, 15) + f.at(1, 11, 14) + f.at(1, 11, 15)) / 4).epsilon(1e-12));
}

TEST_CASE("constant frame gives a constant global view") {
  const Tensor f({2, 64, 64}, 0.37);
  const ViewSet v = decompose(f);
  for (double x : v.global_view.values()) CHECK(x == doctest::Approx(0.37).epsilon(1e-15));
}

TEST_CASE("frames whose sides are not multiples of 64 are rejected") {
  CHECK_THROWS_AS(decompose(Tensor({3, 96, 64})), InputError);
  CHECK_THROWS_AS(decompose(Tensor({3, 64, 100})), InputError);
  CHECK_THROWS_AS(decompose(Tensor({64, 64})), InputError);
  CHECK_THROWS_AS(decompose(Tensor({0, 64, 64})), InputError);
}

TEST_CASE("split_patches tiles a local in row-major 4×4 order") {
  Rng rng(5);
  const Tensor local = random_tensor({1, 8, 8}, rng);
  const auto patches = split_patches(local);
  REQUIRE(patches.size() == 16);
  for (const auto& p : patches) CHECK(p.shape() == Shape{1, 2, 2});
  CHECK(patches[0] == crop(local, 0, 0, 2, 2));
  CHECK(patches[6] == crop(local, 2, 4, 2, 2));
  CHECK(join_patches(patches) == local);
  CHECK_THROWS_AS(split_patches(Tensor({1, 6, 8})), InputError);
}

TEST_CASE("patch round trip on random shapes") {
  Rng rng(11);
  for (int i = 0; i < 20; ++i) {
    const int c = 1 + static_cast<int>(rng.below(4));
    const int h = 4 * (1 + static_cast<int>(rng.below(6))), w = 4 * (1 + static_cast<int>(rng.below(6)));
    const Tensor l = random_tensor({c, h, w}, rng);
    CHECK(join_patches(split_patches(l)) == l);
  }
}

TEST_CASE("stitch with unit weights reproduces the frame, with zero weights the upsampled global") {
  Rng rng(9);
  const Tensor f = random_tensor({2, 64, 64}, rng);
  const ViewSet v = decompose(f);
  const Tensor other = random_tensor({2, 32, 32}, rng);
  CHECK(stitch_fused(v.locals, other, Tensor({4, 16}, 1.0)) == f);
  CHECK(stitch_fused(v.locals, other, Tensor({4, 16}, 0.0)) == resize_bilinear(other, 64, 64));
}

TEST_CASE("half weight on one patch blends constants 2 and 0 into 1") {
  std::array<Tensor, 4> locals;
  for (auto& l : locals) l = Tensor({1, 8, 8}, 2.0);
  Tensor w({4, 16}, 1.0);
  w.at(1, 5) = 0.5;  // quadrant TR, patch row 1 col 1
  const Tensor out = stitch_fused(locals, Tensor({1, 8, 8}, 0.0), w);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      const bool in_patch = y >= 2 && y < 4 && x >= 8 + 2 && x < 8 + 4;
      CHECK(out.at(0, y, x) == (in_patch ? 1.0 : 2.0));
    }
}

TEST_CASE("stitched values stay between local and upsampled global") {
  Rng rng(21);
  for (int trial = 0; trial < 1000; ++trial) {
    std::array<Tensor, 4> locals;
    for (auto& l : locals) l = random_tensor({1, 8, 8}, rng);
    const Tensor g = random_tensor({1, 8, 8}, rng);
    Tensor w({4, 16});
    for (double& x : w.values()) x = rng.uniform();
    const Tensor out = stitch_fused(locals, g, w);
    const Tensor local_full = assemble_quadrants(locals);
    const Tensor g_full = resize_bilinear(g, 16, 16);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double lo = std::min(local_full[i], g_full[i]), hi = std::max(local_full[i], g_full[i]);
      REQUIRE(out[i] >= lo - 1e-12);
      REQUIRE(out[i] <= hi + 1e-12);
    }
  }
}

TEST_CASE("weights outside [0,1] are a contract violation") {
  std::array<Tensor, 4> locals;
  for (auto& l : locals) l = Tensor({1, 8, 8}, 1.0);
  Tensor w({4, 16}, 0.5);
  w.at(2, 3) = 1.5;
  CHECK_THROWS_AS(stitch_fused(locals, Tensor({1, 8, 8}), w), ContractViolation);
  w.at(2, 3) = -0.1;
  CHECK_THROWS_AS(stitch_fused(locals, Tensor({1, 8, 8}), w), ContractViolation);
}

TEST_CASE("stitch gradients match finite differences") {
  Rng rng(4);
  std::vector<Var> locals;
  for (int m = 0; m < 4; ++m) locals.push_back(Var(random_tensor({2, 8, 8}, rng), true));
  Var g(random_tensor({2, 8, 8}, rng), true);
  Tensor wt({4, 16});
  for (double& x : wt.values()) x = 0.1 + 0.8 * rng.uniform();
  Var w(wt, true);
  const Tensor pr = random_tensor({2, 16, 16}, rng);
  auto loss = [&] { return sum(mul(stitch_fused(locals, g, w), Var::constant(pr))); };
  CHECK(testing::grad_check(loss, w).relative_error < 1e-6);
  CHECK(testing::grad_check(loss, g).relative_error < 1e-6);
  CHECK(testing::grad_check(loss, locals[3]).relative_error < 1e-6);
}
