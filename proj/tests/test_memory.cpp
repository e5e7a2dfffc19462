#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <map>

#include "gradcheck.hpp"
#include "hrvvs/errors.hpp"
#include "hrvvs/memory.hpp"

using namespace hrvvs;
using namespace hrvvs::memory;
using hrvvs::testing::random_tensor;

namespace {

// Five global stages of an 8×8 stage-5 pyramid (128, 64, 32, 16, 8 sides).
std::vector<Tensor> pyramid(Rng& rng, int channels = 4) {
  std::vector<Tensor> out;
  for (int s = 0; s < kStages; ++s) out.push_back(random_tensor({channels, 128 >> s, 128 >> s}, rng));
  return out;
}

std::vector<Tensor> constant_pyramid(double v, int channels = 4) {
  std::vector<Tensor> out;
  for (int s = 0; s < kStages; ++s) out.push_back(Tensor({channels, 128 >> s, 128 >> s}, v));
  return out;
}

// Expected stage-5 token count once a bank of capacity n has overflowed.
int expected_tokens(int capacity, int max_exp = 3) {
  int n = 0;
  for (int age = 0; age < capacity; ++age) {
    const int side = std::max(1, 8 >> std::min(age, max_exp));
    n += side * side;
  }
  return n;
}

MemoryBank bank(int capacity, int channels = 4) {
  MemoryConfig c;
  c.capacity = capacity;
  return MemoryBank(c, channels);
}

}  // namespace

TEST_CASE("below capacity every entry stays uncompressed") {
  Rng rng(1);
  MemoryBank b = bank(4);
  for (int t = 0; t < 4; ++t) b.push(pyramid(rng), t);
  CHECK(b.size() == 4);
  for (const MemoryEntry& e : b.entries()) CHECK(e.compression == 1);
  CHECK(b.token_count() == 4 * 64);
}

TEST_CASE("overflow compresses by age: 64 + 16 + 4 + 1 = 85") {
  Rng rng(2);
  MemoryBank b = bank(4);
  for (int t = 0; t < 5; ++t) b.push(pyramid(rng), t);
  CHECK(b.size() == 4);
  CHECK(b.entries().front().frame_index == 1);
  CHECK(b.token_count() == 85);
  CHECK(b.tokens().shape() == Shape{85, 4 + 16});
  const int sides[] = {1, 2, 4, 8};
  for (int i = 0; i < 4; ++i) CHECK(b.entries()[static_cast<std::size_t>(i)].stages[4].dim(1) == sides[i]);
}

TEST_CASE("token count formula for several capacities") {
  for (int capacity : {2, 4, 8}) {
    CAPTURE(capacity);
    Rng rng(static_cast<std::uint64_t>(capacity));
    MemoryBank b = bank(capacity);
    for (int t = 0; t < capacity + 3; ++t) {
      b.push(pyramid(rng), 2 * t);
      if (t >= capacity) CHECK(b.token_count() == expected_tokens(capacity));
    }
  }
  CHECK(expected_tokens(2) == 80);
  CHECK(expected_tokens(8) == 89);
}

TEST_CASE("older entries never hold more tokens and compression never decreases") {
  Rng rng(3);
  MemoryBank b = bank(4);
  std::map<int, int> last_factor;
  for (int t = 0; t < 12; ++t) {
    b.push(pyramid(rng), t);
    const auto& es = b.entries();
    for (std::size_t i = 1; i < es.size(); ++i) {
      CHECK(es[i - 1].frame_index < es[i].frame_index);
      CHECK(es[i - 1].stages[4].size() <= es[i].stages[4].size());
    }
    for (const MemoryEntry& e : es) {
      CHECK((e.compression & (e.compression - 1)) == 0);
      if (last_factor.count(e.frame_index)) CHECK(e.compression >= last_factor[e.frame_index]);
      last_factor[e.frame_index] = e.compression;
    }
  }
}

TEST_CASE("compression is idempotent and preserves constants") {
  MemoryBank b = bank(2);
  for (int t = 0; t < 6; ++t) b.push(constant_pyramid(0.5 + t), t);
  const Tensor once = b.tokens();
  b.compress();
  b.compress();
  CHECK(b.tokens() == once);
  CHECK(b.tokens() == b.tokens());
  for (const MemoryEntry& e : b.entries())
    for (const Tensor& s : e.stages)
      for (double x : s.values()) CHECK(x == 0.5 + e.frame_index);
}

TEST_CASE("tokens are oldest first, row-major, with zero-padded features and age/position codes") {
  Rng rng(4);
  MemoryBank b = bank(4, 6);
  auto p0 = pyramid(rng), p1 = pyramid(rng);
  const Tensor s5_0 = p0[4], s5_1 = p1[4];
  b.push(p0, 0);
  b.push(p1, 1);
  const Tensor h = b.tokens();
  REQUIRE(h.shape() == Shape{128, 22});
  CHECK(h.at(0, 0) == s5_0.at(0, 0, 0));
  CHECK(h.at(9, 3) == s5_0.at(3, 1, 1));
  CHECK(h.at(64 + 10, 2) == s5_1.at(2, 1, 2));
  for (int r = 0; r < 128; ++r) {
    CHECK(h.at(r, 4) == 0.0);
    CHECK(h.at(r, 5) == 0.0);
  }
  // Age code differs between entries; position code repeats across entries.
  CHECK(h.at(0, 6) != h.at(64, 6));
  for (int j = 10; j < 22; ++j) CHECK(h.at(5, j) == h.at(64 + 5, j));
}

TEST_CASE("positions of a pooled entry refer to original-grid coordinates") {
  Rng rng(6);
  MemoryBank b = bank(2);
  for (int t = 0; t < 3; ++t) b.push(pyramid(rng), t);
  const Tensor h = b.tokens();
  REQUIRE(h.shape() == Shape{16 + 64, 20});
  // Pooled cell (1, 2) of the 4×4 entry covers original rows 2..3, cols 4..5.
  double age[4], row[6], col[6];
  sinusoid(1.0, 4, age, 16.0);
  sinusoid(3.0, 6, row, 64.0);
  sinusoid(5.0, 6, col, 64.0);
  const int r = 1 * 4 + 2;
  for (int j = 0; j < 4; ++j) CHECK(h.at(r, 4 + j) == age[j]);
  for (int j = 0; j < 6; ++j) CHECK(h.at(r, 8 + j) == row[j]);
  for (int j = 0; j < 6; ++j) CHECK(h.at(r, 14 + j) == col[j]);
  // The newest entry keeps unit cells centred at (y + 0.5, x + 0.5).
  sinusoid(0.0, 4, age, 16.0);
  sinusoid(2.5, 6, row, 64.0);
  for (int j = 0; j < 4; ++j) CHECK(h.at(16 + 2 * 8 + 5, 4 + j) == age[j]);
  for (int j = 0; j < 6; ++j) CHECK(h.at(16 + 2 * 8 + 5, 8 + j) == row[j]);
}

TEST_CASE("previous global and reset semantics") {
  MemoryBank b = bank(4);
  CHECK_FALSE(b.previous_global().has_value());
  CHECK(b.tokens().shape() == Shape{0, 20});
  const Tensor x({4, 8, 8}, 1.0), y({4, 8, 8}, 2.0);
  b.store_decoder_global(x);
  CHECK(*b.previous_global() == x);
  b.store_decoder_global(y);
  CHECK(*b.previous_global() == y);
  b.push(constant_pyramid(1.0), 0);
  b.reset();
  CHECK_FALSE(b.previous_global().has_value());
  CHECK(b.token_count() == 0);
  b.reset();
  CHECK(b.empty());
  CHECK_NOTHROW(b.push(constant_pyramid(1.0), 0));
}

TEST_CASE("contract and configuration errors") {
  MemoryBank b = bank(4);
  b.push(constant_pyramid(1.0), 3);
  CHECK_THROWS_AS(b.push(constant_pyramid(1.0), 3), ContractViolation);
  CHECK_THROWS_AS(b.push(constant_pyramid(1.0), 2), ContractViolation);
  CHECK_THROWS_AS(b.push(constant_pyramid(1.0, 8), 5), ContractViolation);
  CHECK_THROWS_AS(b.push({Tensor({4, 8, 8})}, 6), ContractViolation);
  MemoryConfig c;
  c.capacity = 0;
  CHECK_THROWS_AS(MemoryBank(c, 4), ConfigError);
  c = MemoryConfig{};
  c.token_stages = {5, 3};
  CHECK_THROWS_AS(MemoryBank(c, 4), ConfigError);
}

TEST_CASE("multi-stage tokens concatenate stages per entry") {
  MemoryConfig c;
  c.token_stages = {3, 4, 5};
  MemoryBank b(c, 4);
  Rng rng(9);
  b.push(pyramid(rng), 0);
  CHECK(b.token_count() == 32 * 32 + 16 * 16 + 64);
}
