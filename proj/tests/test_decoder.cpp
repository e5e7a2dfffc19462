#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "gradcheck.hpp"
#include "hrvvs/decoder.hpp"
#include "hrvvs/errors.hpp"
#include "hrvvs/model.hpp"

using namespace hrvvs;
using namespace hrvvs::decoder;
using hrvvs::testing::grad_check;
using hrvvs::testing::probe;
using hrvvs::testing::random_tensor;
using hrvvs::testing::randomize;

namespace {

constexpr std::array<int, encoder::kStages> kChannels{4, 4, 8, 8, 8};

ModelConfig tiny_model() {
  ModelConfig c;
  c.encoder.channels = kChannels;
  c.toyvar.code_dim = 8;
  c.toyvar.decoder_channels = 8;
  c.toyvar.model_dim = 16;
  c.toyvar.codebook_size = 16;
  c.msim.heads = 2;
  c.dwfm.model_dim = 8;
  c.dwfm.heads = 2;
  return c;
}

Mask random_mask(int h, int w, Rng& rng) {
  Mask m(h, w);
  for (auto& v : m.labels) v = static_cast<std::uint8_t>(rng.below(3));
  return m;
}

// Plain-double oracle for cross entropy + (1 − mean soft Dice over classes 1..K−1).
double loss_oracle(const Tensor& logits, const Mask& mask) {
  const int k = logits.dim(0), h = logits.dim(1), w = logits.dim(2);
  double ce = 0;
  std::vector<double> inter(static_cast<std::size_t>(k)), psum(static_cast<std::size_t>(k)), gsum(static_cast<std::size_t>(k));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double mx = -1e300;
      for (int c = 0; c < k; ++c) mx = std::max(mx, logits.at(c, y, x));
      double z = 0;
      for (int c = 0; c < k; ++c) z += std::exp(logits.at(c, y, x) - mx);
      const int label = mask.at(y, x);
      ce -= logits.at(label, y, x) - mx - std::log(z);
      for (int c = 0; c < k; ++c) {
        const double p = std::exp(logits.at(c, y, x) - mx) / z;
        const double g = label == c ? 1.0 : 0.0;
        inter[static_cast<std::size_t>(c)] += p * g;
        psum[static_cast<std::size_t>(c)] += p;
        gsum[static_cast<std::size_t>(c)] += g;
      }
    }
  double dice = 0;
  for (int c = 1; c < k; ++c)
    dice += (2 * inter[static_cast<std::size_t>(c)] + 1) / (psum[static_cast<std::size_t>(c)] + gsum[static_cast<std::size_t>(c)] + 1);
  return ce / (h * w) + 1 - dice / (k - 1);
}

}  // namespace

TEST_CASE("decoded stages mirror the encoder pyramid") {
  ParamStore store;
  Rng rng(1);
  Decoder dec(store, kChannels, kClasses, rng);
  encoder::ViewFeatures skips;
  for (int i = 0; i < encoder::kStages; ++i)
    skips[static_cast<std::size_t>(i)] = Var::constant(random_tensor({kChannels[static_cast<std::size_t>(i)], 32 >> i, 32 >> i}, rng));
  const DecodedView d = dec.decode_view(skips[4], &skips);
  for (int i = 0; i < encoder::kStages; ++i)
    CHECK(d.stages[static_cast<std::size_t>(i)].shape() == skips[static_cast<std::size_t>(i)].shape());
  CHECK(d.stages[4].value() == skips[4].value());
  CHECK(d.penultimate.shape() == Shape{4, 32, 32});
  for (double x : d.penultimate.value().values()) CHECK(x >= 0.0);
  // Skips change the output.
  CHECK(max_abs_diff(dec.decode_view(skips[4], nullptr).penultimate.value(), d.penultimate.value()) > 1e-9);
  CHECK_THROWS_AS(dec.decode_view(Var(Tensor({4, 2, 2})), nullptr), ConfigError);
  encoder::ViewFeatures bad = skips;
  bad[1] = Var(Tensor({4, 3, 3}));
  CHECK_THROWS_AS(dec.decode_view(skips[4], &bad), ConfigError);
}

TEST_CASE("argmax mask picks the largest logit, ties to the lower class") {
  Tensor logits({3, 1, 3});
  logits.at(0, 0, 0) = 1;
  logits.at(2, 0, 1) = 5;
  logits.at(1, 0, 2) = 2;
  logits.at(2, 0, 2) = 2;
  const Mask m = argmax_mask(logits);
  CHECK(m.at(0, 0) == 0);
  CHECK(m.at(0, 1) == 2);
  CHECK(m.at(0, 2) == 1);
}

TEST_CASE("segmentation loss matches a plain oracle and its gradient") {
  Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor logits = random_tensor({3, 6, 7}, rng, 2.0);
    const Mask m = random_mask(6, 7, rng);
    CHECK(segmentation_loss(Var(logits), m).value()[0] == doctest::Approx(loss_oracle(logits, m)).epsilon(1e-12));
  }
  Var logits(random_tensor({3, 5, 5}, rng), true);
  const Mask m = random_mask(5, 5, rng);
  CHECK(grad_check([&] { return segmentation_loss(logits, m); }, logits, 75).relative_error < 1e-6);
  CHECK_THROWS_AS(segmentation_loss(logits, Mask(4, 5)), ContractViolation);
  Mask bad(5, 5, 3);
  CHECK_THROWS_AS(segmentation_loss(logits, bad), ContractViolation);
}

TEST_CASE("a confident correct prediction has a small loss") {
  Rng rng(3);
  const Mask m = random_mask(8, 8, rng);
  Tensor logits({3, 8, 8}, -10.0);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) logits.at(m.at(y, x), y, x) = 10.0;
  CHECK(segmentation_loss(Var(logits), m).value()[0] < 1e-3);
}

TEST_CASE("model step: shapes, state advance and identity of zero-initialised branches") {
  HrvvsModel model(tiny_model(), 5);
  Rng rng(4);
  StreamState state = model.new_stream();
  const Tensor f0 = random_tensor({3, 128, 128}, rng), f1 = random_tensor({3, 128, 128}, rng);
  const FrameOutput o0 = model.step(f0, state, ForwardContext{});
  CHECK(o0.logits.shape() == Shape{3, 128, 128});
  CHECK(o0.fusion_weights.shape() == Shape{4, 16});
  CHECK(state.frame == 1);
  CHECK(state.memory.size() == 1);
  CHECK(*state.memory.previous_global() == o0.penultimate_global);
  // Zero-initialised MSIM outputs pass features through unchanged.
  CHECK(o0.msim.g_msim.value() == o0.pyramid.global().back().value());
  const FrameOutput o1 = model.step(f1, state, ForwardContext{});
  CHECK(o1.msim.g_h.value() == o1.pyramid.global().back().value());
  CHECK(state.weights.frame == 2);
  state.reset();
  CHECK(state.memory.empty());
  CHECK(model.step(f0, state, ForwardContext{}).logits.value() == o0.logits.value());
}

TEST_CASE("disabled branches bypass exactly and share the initialisation") {
  ModelConfig full = tiny_model();
  ModelConfig off = full;
  off.flags = {false, false, false};
  HrvvsModel a(full, 9), b(off, 9);
  for (const auto& [name, p] : a.params().all()) CHECK(b.params().get(name).value() == p.value());
  Rng rng(5);
  const Tensor f = random_tensor({3, 64, 64}, rng);
  StreamState sb = b.new_stream();
  const FrameOutput ob = b.step(f, sb, ForwardContext{});
  for (double w : ob.fusion_weights.value().values()) CHECK(w == 1.0);
  CHECK(sb.weights.frame == 1);
  CHECK(ob.msim.g_msim.value() == ob.pyramid.global().back().value());
  CHECK_FALSE(ob.pyramid.injected);
  CHECK(b.priors(views::decompose(f)).empty());
}

TEST_CASE("the VAR backbone is frozen and the rest trains") {
  HrvvsModel model(tiny_model(), 1);
  bool backbone = false, adapter = false;
  for (const auto& [name, p] : model.params().trainable()) {
    backbone |= name.rfind("toyvar.backbone.", 0) == 0;
    adapter |= name.rfind("toyvar.adapter.", 0) == 0;
  }
  CHECK_FALSE(backbone);
  CHECK(adapter);
  for (const auto& [name, p] : model.params().all()) CHECK(static_cast<double>(static_cast<float>(p.value()[0])) == p.value()[0]);
}

TEST_CASE("end-to-end loss gradients match finite differences on a two-frame clip") {
  HrvvsModel model(tiny_model(), 11);
  Rng rng(6);
  randomize(model.params(), "msim.", rng, 0.3);
  randomize(model.params(), "toyvar.prior_proj.", rng, 0.3);
  randomize(model.params(), "toyvar.adapter.up", rng, 0.3);
  const Tensor f0 = random_tensor({3, 64, 64}, rng, 0.5), f1 = random_tensor({3, 64, 64}, rng, 0.5);
  const Mask m0 = random_mask(64, 64, rng), m1 = random_mask(64, 64, rng);
  // Stream state is carried between frames as detached data, so the second
  // frame is differentiated with the state left by the first held fixed.
  StreamState after_first = model.new_stream();
  model.step(f0, after_first, ForwardContext{});
  CHECK(after_first.memory.token_count() > 0);
  auto loss = [&] {
    StreamState s0 = model.new_stream();
    StreamState s1 = after_first;
    const Var l0 = segmentation_loss(model.step(f0, s0, ForwardContext{}).logits, m0);
    const Var l1 = segmentation_loss(model.step(f1, s1, ForwardContext{}).logits, m1);
    return add(l0, l1);
  };
  for (const std::string name : {"decoder.head.weight", "decoder.stage2.refine.bias", "encoder.stage1.down.weight",
                                 "msim.history.out.weight", "msim.to_locals.q.weight", "dwfm.head.weight",
                                 "dwfm.fusion_logits", "toyvar.adapter.down.weight", "toyvar.prior_proj.3.weight"}) {
    CAPTURE(name);
    CHECK(grad_check(loss, model.params().get(name), 6).relative_error < 1e-3);
  }
}
