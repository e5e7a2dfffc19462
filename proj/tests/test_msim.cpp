#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "gradcheck.hpp"
#include "hrvvs/errors.hpp"
#include "hrvvs/msim.hpp"

using namespace hrvvs;
using namespace hrvvs::msim;
using hrvvs::testing::grad_check;
using hrvvs::testing::probe;
using hrvvs::testing::random_tensor;
using hrvvs::testing::randomize;

namespace {

constexpr int kC = 8;
constexpr int kMemDim = 24;

struct Fixture {
  ParamStore store;
  Rng rng{31};
  Msim msim{store, kC, kMemDim, MsimConfig{}, rng};
  Var global;
  std::vector<Var> locals;
  Tensor history;

  explicit Fixture(int side = 8, int history_rows = 20) {
    Rng data(5);
    global = Var(random_tensor({kC, side, side}, data), true);
    for (int m = 0; m < 4; ++m) locals.push_back(Var(random_tensor({kC, side, side}, data), true));
    history = random_tensor({history_rows, kMemDim}, data);
  }
};

}  // namespace

TEST_CASE("zero-initialised output projections make every update an exact identity") {
  Fixture fx;
  const ForwardContext eval;
  const MsimOutput out = fx.msim(fx.global, fx.locals, fx.history, eval);
  CHECK(out.g_h.value() == fx.global.value());
  CHECK(out.g_msim.value() == fx.global.value());
  for (int m = 0; m < 4; ++m) CHECK(out.locals[static_cast<std::size_t>(m)].value() == fx.locals[static_cast<std::size_t>(m)].value());
}

TEST_CASE("empty history bypasses the history update") {
  Fixture fx(8, 0);
  Rng rng(2);
  randomize(fx.store, "msim.history.out", rng);
  const Var g_h = fx.msim.update_global_with_history(fx.global, Tensor({0, kMemDim}), ForwardContext{});
  CHECK(g_h.value() == fx.global.value());
  CHECK(fx.msim.update_global_with_history(fx.global, Tensor(), ForwardContext{}).value() == fx.global.value());
}

TEST_CASE("non-zero projections change features and keep shapes") {
  Fixture fx;
  Rng rng(3);
  randomize(fx.store, "msim.", rng);
  const MsimOutput out = fx.msim(fx.global, fx.locals, fx.history, ForwardContext{});
  CHECK(out.g_h.shape() == fx.global.shape());
  CHECK(max_abs_diff(out.g_h.value(), fx.global.value()) > 1e-6);
  CHECK(max_abs_diff(out.g_msim.value(), out.g_h.value()) > 1e-6);
  CHECK(out.locals[2].shape() == fx.locals[2].shape());
  CHECK(max_abs_diff(out.locals[2].value(), fx.locals[2].value()) > 1e-6);
}

TEST_CASE("attention distributions are normalised over the key set") {
  Fixture fx;
  Tensor probs;
  fx.msim.update_global_with_history(fx.global, fx.history, ForwardContext{}, &probs);
  REQUIRE(probs.shape() == Shape{4, 64, 20});
  for (int h = 0; h < 4; ++h)
    for (int q = 0; q < 64; ++q) {
      double s = 0;
      for (int k = 0; k < 20; ++k) {
        const double p = probs[(static_cast<std::size_t>(h) * 64 + q) * 20 + k];
        CHECK(p >= 0.0);
        s += p;
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("pooled local tokens cover three scales per view") {
  Fixture fx;
  CHECK(fx.msim.pooled_local_tokens(fx.locals).shape() == Shape{4 * (64 + 16 + 4), kC});
  Fixture tiny(2);
  // 2×2 maps clamp the quarter scale to a single cell.
  CHECK(tiny.msim.pooled_local_tokens(tiny.locals).shape() == Shape{4 * (4 + 1 + 1), kC});
}

TEST_CASE("dropout is active only in training mode") {
  Fixture fx;
  Rng rng(4);
  randomize(fx.store, "msim.", rng);
  Rng drop(9);
  ForwardContext train{.training = true, .rng = &drop};
  const Tensor a = fx.msim(fx.global, fx.locals, fx.history, ForwardContext{}).g_msim.value();
  const Tensor b = fx.msim(fx.global, fx.locals, fx.history, train).g_msim.value();
  CHECK(max_abs_diff(a, b) > 1e-9);
  CHECK(fx.msim(fx.global, fx.locals, fx.history, ForwardContext{}).g_msim.value() == a);
}

TEST_CASE("width mismatches are configuration errors") {
  Fixture fx;
  CHECK_THROWS_AS(fx.msim.update_global_with_history(fx.global, Tensor({3, kMemDim + 1}, 1.0), ForwardContext{}),
                  ConfigError);
  CHECK_THROWS_AS(fx.msim.update_global_with_history(Var(Tensor({kC + 1, 8, 8})), fx.history, ForwardContext{}),
                  ConfigError);
  std::vector<Var> three(fx.locals.begin(), fx.locals.begin() + 3);
  CHECK_THROWS_AS(fx.msim.pooled_local_tokens(three), ConfigError);
  ParamStore s;
  Rng rng(1);
  CHECK_THROWS_AS(Msim(s, 6, kMemDim, MsimConfig{}, rng), ConfigError);
}

TEST_CASE("gradients on 8×8 token problems match finite differences") {
  Fixture fx;
  Rng rng(6);
  randomize(fx.store, "msim.", rng);
  const ForwardContext eval;
  auto history_loss = [&] { return probe(fx.msim.update_global_with_history(fx.global, fx.history, eval)); };
  auto full_loss = [&] {
    const MsimOutput o = fx.msim(fx.global, fx.locals, fx.history, eval);
    return add(probe(o.g_msim, 1), probe(o.locals[1], 2));
  };
  for (const char* name : {"msim.history.q.weight", "msim.history.k.weight", "msim.history.v.weight",
                           "msim.history.out.weight", "msim.history.ln_k.gamma"})
    CHECK(grad_check(history_loss, fx.store.get(name)).relative_error < 1e-4);
  for (const char* name : {"msim.from_locals.q.weight", "msim.from_locals.v.bias", "msim.to_locals.k.weight",
                           "msim.to_locals.out.bias", "msim.to_locals.ln_q.beta"})
    CHECK(grad_check(full_loss, fx.store.get(name)).relative_error < 1e-4);
  CHECK(grad_check(full_loss, fx.global).relative_error < 1e-4);
  CHECK(grad_check(full_loss, fx.locals[3]).relative_error < 1e-4);
}
