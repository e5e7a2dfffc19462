#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "gradcheck.hpp"
#include "hrvvs/encoder.hpp"
#include "hrvvs/errors.hpp"
#include "hrvvs/memory.hpp"
#include "hrvvs/toyvar.hpp"

using namespace hrvvs;
using namespace hrvvs::encoder;
using hrvvs::testing::random_tensor;

namespace {

StageConfig small_config() {
  StageConfig c;
  c.channels = {4, 4, 8, 8, 8};
  return c;
}

PriorSet random_priors(const StageConfig& c, int h, int w, Rng& rng) {
  const auto sizes = Encoder::stage_sizes(h, w);
  PriorSet out(kViews);
  for (auto& per_view : out)
    for (int i = 0; i < kStages; ++i)
      per_view.push_back(Var::constant(random_tensor(
          {c.channels[static_cast<std::size_t>(i)], sizes[static_cast<std::size_t>(i)].first,
           sizes[static_cast<std::size_t>(i)].second},
          rng)));
  return out;
}

}  // namespace

TEST_CASE("stage sizes halve five times") {
  const auto s = Encoder::stage_sizes(64, 128);
  REQUIRE(s.size() == 5);
  CHECK(s[0] == std::pair{32, 64});
  CHECK(s[4] == std::pair{2, 4});
  CHECK_THROWS_AS(Encoder::stage_sizes(48, 64), InputError);
}

TEST_CASE("pyramid shapes and weight sharing across views") {
  ParamStore store;
  Rng rng(1);
  const StageConfig c = small_config();
  Encoder enc(store, c, rng);
  const views::ViewSet v = views::decompose(random_tensor({3, 128, 128}, rng));
  const FeaturePyramid pyr = enc.encode_views(v, {});
  CHECK_FALSE(pyr.injected);
  for (int m = 0; m < kViews; ++m) {
    for (int i = 0; i < kStages; ++i)
      CHECK(pyr.at(m, i).shape() == Shape{c.channels[static_cast<std::size_t>(i)], 32 >> i, 32 >> i});
    const ViewFeatures direct = enc.encode_view(Var::constant(v.view(m)));
    CHECK(direct[4].value() == pyr.at(m, 4).value());
  }
  // One set of weights serves every view.
  CHECK(store.all().size() == 5 * 2 * 2);
}

TEST_CASE("zero priors are an exact identity and non-zero priors add exactly") {
  ParamStore store;
  Rng rng(2);
  StageConfig c = small_config();
  Encoder enc(store, c, rng);
  const views::ViewSet v = views::decompose(random_tensor({3, 64, 64}, rng));
  const FeaturePyramid plain = enc.encode_views(v, {});

  PriorSet zeros = random_priors(c, 32, 32, rng);
  for (auto& per_view : zeros)
    for (Var& p : per_view) p = Var::constant(Tensor(p.shape(), 0.0));
  const FeaturePyramid injected = enc.encode_views(v, zeros);
  CHECK(injected.injected);
  for (int m = 0; m < kViews; ++m)
    for (int i = 0; i < kStages; ++i) CHECK(injected.at(m, i).value() == plain.at(m, i).value());

  // A prior on the last stage only shifts that stage's output.
  std::vector<Var> last(kStages);
  for (int i = 0; i < kStages; ++i) last[static_cast<std::size_t>(i)] = zeros[0][static_cast<std::size_t>(i)];
  const Tensor bump = random_tensor(last[4].shape(), rng);
  last[4] = Var::constant(bump);
  const ViewFeatures f = enc.encode_view(Var::constant(v.view(0)), &last);
  for (std::size_t i = 0; i < f[4].value().size(); ++i)
    CHECK(f[4].value()[i] == plain.at(0, 4).value()[i] + bump[i]);
}

TEST_CASE("stages without injection ignore their priors") {
  ParamStore store;
  Rng rng(3);
  StageConfig c = small_config();
  c.inject = {false, false, false, false, false};
  Encoder enc(store, c, rng);
  const views::ViewSet v = views::decompose(random_tensor({3, 64, 64}, rng));
  const FeaturePyramid a = enc.encode_views(v, {});
  const FeaturePyramid b = enc.encode_views(v, random_priors(c, 32, 32, rng));
  for (int i = 0; i < kStages; ++i) CHECK(a.at(2, i).value() == b.at(2, i).value());
}

TEST_CASE("priors from the zero-initialised VAR projections leave features untouched") {
  ParamStore store;
  Rng rng(4);
  const StageConfig c = small_config();
  Encoder enc(store, c, rng);
  toyvar::ToyVar var(store, toyvar::ToyVarConfig{}, c.channels, rng);
  const views::ViewSet v = views::decompose(random_tensor({3, 64, 64}, rng));
  PriorSet priors;
  for (int m = 0; m < kViews; ++m) priors.push_back(var.extract_priors(v.view(m), Encoder::stage_sizes(32, 32)));
  const FeaturePyramid a = enc.encode_views(v, {});
  const FeaturePyramid b = enc.encode_views(v, priors);
  for (int m = 0; m < kViews; ++m)
    for (int i = 0; i < kStages; ++i) CHECK(a.at(m, i).value() == b.at(m, i).value());
}

TEST_CASE("input and configuration errors") {
  ParamStore store;
  Rng rng(5);
  const StageConfig c = small_config();
  Encoder enc(store, c, rng);
  CHECK_THROWS_AS(enc.encode_view(Var(Tensor({1, 64, 64}))), InputError);
  CHECK_THROWS_AS(enc.encode_view(Var(Tensor({3, 48, 64}))), InputError);
  const std::vector<Var> too_few(3);
  CHECK_THROWS_AS(enc.encode_view(Var(Tensor({3, 64, 64})), &too_few), ConfigError);
  PriorSet wrong = random_priors(c, 64, 64, rng);
  CHECK_THROWS_AS(enc.encode_views(views::decompose(Tensor({3, 64, 64})), wrong), ConfigError);
  StageConfig bad = c;
  bad.channels = {8, 4, 8, 8, 8};
  ParamStore s2;
  CHECK_THROWS_AS(Encoder(s2, bad, rng), ConfigError);
}

TEST_CASE("storing the global pyramid grows the memory by one frame") {
  ParamStore store;
  Rng rng(6);
  const StageConfig c = small_config();
  Encoder enc(store, c, rng);
  memory::MemoryBank bank(memory::MemoryConfig{}, 8);
  const FeaturePyramid pyr = enc.encode_views(views::decompose(random_tensor({3, 128, 128}, rng)), {});
  store_current_global(pyr, bank, 0);
  CHECK(bank.size() == 1);
  CHECK(bank.entries()[0].stages[4] == pyr.global()[4].value());
  store_current_global(pyr, bank, 1);
  CHECK(bank.size() == 2);
  CHECK(bank.token_count() == 2 * 4);
}
