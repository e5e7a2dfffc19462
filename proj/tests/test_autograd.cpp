#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "gradcheck.hpp"
#include "hrvvs/autograd.hpp"
#include "hrvvs/nn.hpp"

using namespace hrvvs;
using hrvvs::testing::grad_check;
using hrvvs::testing::probe;
using hrvvs::testing::random_tensor;

namespace {

constexpr double kTol = 1e-6;

Var leaf(Shape s, Rng& rng, double scale = 1.0) { return Var(random_tensor(std::move(s), rng, scale), true); }

}  // namespace

TEST_CASE("elementwise and reduction gradients") {
  Rng rng(1);
  Var a = leaf({3, 4}, rng), b = leaf({3, 4}, rng), s = leaf({1}, rng);
  auto f = [&] { return probe(add(mul(sigmoid(a), b), scale_by(sub(relu(a), square(b)), s))); };
  CHECK(grad_check(f, a).relative_error < kTol);
  CHECK(grad_check(f, b).relative_error < kTol);
  CHECK(grad_check(f, s).relative_error < kTol);
  auto g = [&] { return add(mse(a, b), element(a, 5)); };
  CHECK(grad_check(g, a).relative_error < kTol);
}

TEST_CASE("matrix op gradients") {
  Rng rng(2);
  Var x = leaf({5, 6}, rng), w = leaf({4, 6}, rng), bias = leaf({4}, rng), m = leaf({6, 3}, rng);
  Var gamma = leaf({4}, rng), beta = leaf({4}, rng);
  auto f = [&] {
    Var y = layer_norm_rows(linear(x, w, bias), gamma, beta);
    return probe(add(softmax_rows(y), transpose(transpose(y))));
  };
  CHECK(grad_check(f, x).relative_error < kTol);
  CHECK(grad_check(f, w).relative_error < kTol);
  CHECK(grad_check(f, bias).relative_error < kTol);
  CHECK(grad_check(f, gamma).relative_error < kTol);
  CHECK(grad_check(f, beta).relative_error < kTol);
  auto g = [&] { return probe(segment_mean_rows(matmul(x, m), 5)); };
  CHECK(grad_check(g, m).relative_error < kTol);
  std::vector<int> idx{0, 2, 2, 1};
  auto h = [&] { return probe(gather_rows(w, idx)); };
  CHECK(grad_check(h, w).relative_error < kTol);
}

TEST_CASE("conv2d gradients for strided, padded and pointwise kernels") {
  Rng rng(3);
  Var x = leaf({3, 8, 8}, rng);
  Var w3 = leaf({4, 3, 3, 3}, rng), b3 = leaf({4}, rng);
  Var w1 = leaf({2, 4, 1, 1}, rng);
  Var w4 = leaf({2, 3, 4, 4}, rng);
  auto f = [&] { return probe(conv2d(relu(conv2d(x, w3, b3, 2, 1)), w1, Var(), 1, 0)); };
  CHECK(grad_check(f, x).relative_error < kTol);
  CHECK(grad_check(f, w3).relative_error < kTol);
  CHECK(grad_check(f, b3).relative_error < kTol);
  CHECK(grad_check(f, w1).relative_error < kTol);
  auto g = [&] { return probe(conv2d(x, w4, Var(), 4, 0)); };
  CHECK(grad_check(g, w4).relative_error < kTol);
  CHECK(grad_check(g, x).relative_error < kTol);
}

TEST_CASE("conv2d matches a direct loop") {
  Rng rng(4);
  Tensor x = random_tensor({2, 5, 5}, rng), w = random_tensor({3, 2, 3, 3}, rng);
  Tensor y = conv2d(Var::constant(x), Var::constant(w), Var(), 2, 1).value();
  REQUIRE(y.shape() == Shape{3, 3, 3});
  for (int o = 0; o < 3; ++o)
    for (int oy = 0; oy < 3; ++oy)
      for (int ox = 0; ox < 3; ++ox) {
        double s = 0.0;
        for (int c = 0; c < 2; ++c)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const int iy = oy * 2 - 1 + ky, ix = ox * 2 - 1 + kx;
              if (iy >= 0 && iy < 5 && ix >= 0 && ix < 5)
                s += x.at(c, iy, ix) * w[static_cast<std::size_t>(((o * 2 + c) * 3 + ky) * 3 + kx)];
            }
        CHECK(y.at(o, oy, ox) == doctest::Approx(s).epsilon(1e-12));
      }
}

TEST_CASE("spatial resampling gradients") {
  Rng rng(5);
  Var x = leaf({2, 4, 6}, rng);
  auto f = [&] {
    Var up = resize_bilinear(x, 7, 9);
    Var down = avg_pool(upsample_nearest(x, 2), 2);
    return add(probe(up), probe(add(down, x), 3));
  };
  CHECK(grad_check(f, x).relative_error < kTol);
  auto g = [&] { return probe(resize_bilinear(x, 2, 3)); };
  CHECK(grad_check(g, x).relative_error < kTol);
}

TEST_CASE("token layout, crop and grid assembly gradients") {
  Rng rng(6);
  Var x = leaf({3, 4, 4}, rng);
  std::vector<Var> tiles{crop(x, 0, 0, 2, 2), crop(x, 0, 2, 2, 2), crop(x, 2, 0, 2, 2), crop(x, 2, 2, 2, 2)};
  CHECK(assemble_grid(tiles, 2, 2).value() == x.value());
  auto f = [&] {
    Var t = chw_to_tokens(x);
    Var back = tokens_to_chw(concat_rows(std::vector<Var>{t}), 4, 4);
    std::vector<Var> parts{crop(back, 1, 1, 2, 3), crop(back, 0, 0, 2, 3)};
    return add(probe(assemble_grid(parts, 2, 1)), probe(select_channel(x, 2), 5));
  };
  CHECK(grad_check(f, x).relative_error < kTol);
}

TEST_CASE("softmax_channels, blend and losses") {
  Rng rng(7);
  Var logits = leaf({3, 4, 4}, rng), a = leaf({2, 4, 4}, rng), b = leaf({2, 4, 4}, rng);
  Tensor m0({4, 4});
  for (double& v : m0.values()) v = rng.uniform();
  Var map(m0, true);
  std::vector<int> target(16);
  for (int i = 0; i < 16; ++i) target[static_cast<std::size_t>(i)] = i % 3;
  auto f = [&] {
    return add(add(cross_entropy_pixels(logits, target), probe(softmax_channels(logits))), probe(blend(a, b, map)));
  };
  CHECK(grad_check(f, logits).relative_error < kTol);
  CHECK(grad_check(f, a).relative_error < kTol);
  CHECK(grad_check(f, b).relative_error < kTol);
  CHECK(grad_check(f, map).relative_error < kTol);
}

TEST_CASE("attention gradients and normalised probabilities") {
  Rng rng(8);
  Var q = leaf({5, 8}, rng), k = leaf({7, 8}, rng), v = leaf({7, 8}, rng);
  auto f = [&] { return probe(attention(q, k, v, 2)); };
  CHECK(grad_check(f, q).relative_error < kTol);
  CHECK(grad_check(f, k).relative_error < kTol);
  CHECK(grad_check(f, v).relative_error < kTol);
  Tensor probs;
  attention(q, k, v, 2, &probs);
  REQUIRE(probs.shape() == Shape{2, 5, 7});
  for (int h = 0; h < 2; ++h)
    for (int r = 0; r < 5; ++r) {
      double s = 0.0;
      for (int c = 0; c < 7; ++c) s += probs[static_cast<std::size_t>((h * 5 + r) * 7 + c)];
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
}

TEST_CASE("cross attention layer gradients through every projection") {
  Rng rng(9);
  ParamStore store;
  CrossAttention mhca(store, "mhca", {.query_dim = 6, .key_dim = 10, .model_dim = 8, .heads = 2, .zero_init_output = false}, rng);
  Var q = leaf({4, 6}, rng), kv = leaf({9, 10}, rng);
  auto f = [&] { return probe(mhca(q, kv, kv)); };
  for (const auto& [name, p] : store.all()) {
    INFO(name);
    CHECK(grad_check(f, p).relative_error < 1e-5);
  }
  CHECK(grad_check(f, q).relative_error < 1e-5);
  CHECK(grad_check(f, kv).relative_error < 1e-5);
}

TEST_CASE("dropout is identity in eval mode and rescales in training") {
  Rng rng(10);
  Var x(Tensor({1000}, 1.0), true);
  CHECK(dropout(x, 0.1, false, nullptr).value() == x.value());
  Var y = dropout(x, 0.5, true, &rng);
  int zeros = 0;
  for (double v : y.value().values()) {
    CHECK((v == 0.0 || v == 2.0));
    zeros += v == 0.0;
  }
  CHECK(zeros > 400);
  CHECK(zeros < 600);
}

TEST_CASE("frozen leaves receive no gradient") {
  Rng rng(11);
  Var frozen(random_tensor({3, 3}, rng), false), live = leaf({3, 3}, rng);
  backward(sum(mul(frozen, live)));
  CHECK(frozen.grad() == Tensor({3, 3}, 0.0));
  CHECK(live.grad() == frozen.value());
}
