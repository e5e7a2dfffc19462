#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>

#include "hrvvs/errors.hpp"
#include "hrvvs/metrics.hpp"
#include "hrvvs/rng.hpp"
#include "json.hpp"

using namespace hrvvs;
using namespace hrvvs::metrics;

namespace {

Tensor random_binary(int h, int w, Rng& rng, double p = 0.3) {
  Tensor t({h, w});
  for (double& v : t.values()) v = rng.bernoulli(p) ? 1.0 : 0.0;
  return t;
}

Tensor random_soft(int h, int w, Rng& rng) {
  Tensor t({h, w});
  for (double& v : t.values()) v = rng.uniform();
  return t;
}

// Closed-form inputs shared with the reference script used to pin values.
std::pair<Tensor, Tensor> pinned_case(int k) {
  Tensor pred({16, 16}), gt({16, 16});
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      bool g;
      double p;
      if (k == 0) {
        g = (y >= 4 && y <= 11 && x >= 5 && x <= 12) || x == y;
        p = g ? 0.8 : 0.3 * ((x * 7 + y * 3) % 5) / 4;
      } else {
        g = (y - 6) * (y - 6) + (x - 9) * (x - 9) <= 16;
        p = g ? 0.9 : 0.05 * ((x + 2 * y) % 7) / 6;
        if (g && (x + y) % 5 == 0) p = 0.4;
      }
      gt.at(y, x) = g ? 1.0 : 0.0;
      pred.at(y, x) = p;
    }
  return {pred, gt};
}

// Enhanced alignment written directly from its definition.
double alignment_oracle(const Tensor& pred, const Tensor& gt, double t) {
  const double n = static_cast<double>(gt.size());
  double mf = 0, mg = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    mf += pred[i] >= t;
    mg += gt[i];
  }
  if (mg == 0) return 1.0 - mf / n;
  if (mg == n) return mf / n;
  mf /= n;
  mg /= n;
  double s = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double a = (pred[i] >= t) - mf, b = gt[i] - mg;
    const double xi = 2 * a * b / (a * a + b * b + std::numeric_limits<double>::epsilon());
    s += (xi + 1) * (xi + 1) / 4;
  }
  return s / n;
}

}  // namespace

TEST_CASE("Jaccard and Dice agree with brute-force counting") {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor gt = random_binary(16, 16, rng, rng.uniform());
    const Tensor pred = random_soft(16, 16, rng);
    int inter = 0, uni = 0, p = 0, g = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      const bool a = pred[i] >= 0.5, b = gt[i] == 1.0;
      inter += a && b;
      uni += a || b;
      p += a;
      g += b;
    }
    CHECK(jaccard(pred, gt) == (uni ? static_cast<double>(inter) / uni : 1.0));
    CHECK(dice(pred, gt) == (p + g ? 2.0 * inter / (p + g) : 1.0));
  }
}

TEST_CASE("Jaccard equals D / (2 − D)") {
  Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const Tensor gt = random_binary(12, 12, rng, rng.uniform());
    const Tensor pred = random_binary(12, 12, rng, rng.uniform());
    const double d = dice(pred, gt);
    REQUIRE(jaccard(pred, gt) == doctest::Approx(d / (2 - d)).epsilon(1e-12));
  }
}

TEST_CASE("perfect predictions score 1 on every measure") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor gt = random_binary(16, 16, rng, 0.1 + 0.8 * rng.uniform());
    for (double v : evaluate_pair(gt, gt).v) CHECK(v == doctest::Approx(1.0).epsilon(1e-9));
  }
  const Tensor empty({8, 8}, 0.0), full({8, 8}, 1.0);
  for (double v : evaluate_pair(empty, empty).v) CHECK(v == 1.0);
  for (double v : evaluate_pair(full, full).v) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("random inputs stay inside [0, 1]") {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const Tensor gt = random_binary(16, 16, rng, rng.uniform());
    const Tensor pred = trial % 2 ? random_soft(16, 16, rng) : random_binary(16, 16, rng, rng.uniform());
    for (double v : evaluate_pair(pred, gt).v) REQUIRE((v >= 0.0 && v <= 1.0));
  }
}

TEST_CASE("degenerate ground truth") {
  const Tensor empty({8, 8}, 0.0), full({8, 8}, 1.0), half({8, 8}, 0.25);
  CHECK(s_measure(half, empty) == doctest::Approx(0.75));
  CHECK(s_measure(half, full) == doctest::Approx(0.25));
  CHECK(weighted_f(half, empty) == 0.0);
  CHECK(jaccard(half, empty) == 1.0);  // nothing predicted at the 0.5 cut
  CHECK(e_measure_at(full, empty, 0.5) == 0.0);
  CHECK(e_measure_at(empty, empty, 0.5) == 1.0);
  CHECK(e_measure_at(full, full, 0.5) == 1.0);
}

TEST_CASE("exact distance transform versus brute force") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const int h = 3 + static_cast<int>(rng.below(14)), w = 3 + static_cast<int>(rng.below(14));
    const Tensor b = random_binary(h, w, rng, 0.05 + 0.3 * rng.uniform());
    const DistanceField f = distance_transform(b);
    bool any = false;
    for (double v : b.values()) any |= v != 0.0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double best = std::numeric_limits<double>::infinity();
        for (int yy = 0; yy < h; ++yy)
          for (int xx = 0; xx < w; ++xx)
            if (b.at(yy, xx) != 0.0) best = std::min(best, std::hypot(y - yy, x - xx));
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        if (!any) {
          CHECK(std::isinf(f.distance[i]));
          CHECK(f.nearest[i] == -1);
          continue;
        }
        REQUIRE(f.distance[i] == doctest::Approx(best).epsilon(1e-12));
        const int q = f.nearest[i];
        REQUIRE(b[static_cast<std::size_t>(q)] != 0.0);
        REQUIRE(std::hypot(y - q / w, x - q % w) == doctest::Approx(best).epsilon(1e-12));
      }
  }
}

TEST_CASE("E-measure matches a direct evaluation of the definition") {
  Rng rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    const Tensor gt = random_binary(10, 12, rng, rng.uniform());
    const Tensor pred = random_soft(10, 12, rng);
    for (double t : {0.1, 0.5, 0.77}) CHECK(e_measure_at(pred, gt, t) == doctest::Approx(alignment_oracle(pred, gt, t)).epsilon(1e-12));
    double mean = 0;
    for (int i = 0; i < 256; ++i) mean += alignment_oracle(pred, gt, (i + 0.5) / 256);
    CHECK(e_measure_mean(pred, gt) == doctest::Approx(mean / 256).epsilon(1e-12));
  }
}

TEST_CASE("S-measure and weighted F agree with pinned reference values") {
  // Reference values from an independent NumPy/SciPy implementation.
  const double s_ref[] = {0.905738445422861, 0.9534598867869231};
  const double f_ref[] = {0.6994485329908156, 0.867296213190555};
  for (int k = 0; k < 2; ++k) {
    CAPTURE(k);
    const auto [pred, gt] = pinned_case(k);
    CHECK(s_measure(pred, gt) == doctest::Approx(s_ref[k]).epsilon(1e-12));
    CHECK(weighted_f(pred, gt) == doctest::Approx(f_ref[k]).epsilon(1e-12));
  }
}

TEST_CASE("S-measure rewards structure: shifting the prediction lowers the score") {
  Tensor gt({20, 20}), shifted({20, 20});
  for (int y = 5; y < 15; ++y)
    for (int x = 5; x < 15; ++x) {
      gt.at(y, x) = 1.0;
      shifted.at(y, std::min(19, x + 4)) = 1.0;
    }
  CHECK(s_measure(shifted, gt) < s_measure(gt, gt));
  CHECK(weighted_f(shifted, gt) < 1.0);
}

TEST_CASE("non-binary ground truth and shape mismatches are rejected") {
  Tensor gt({4, 4}, 0.0);
  gt.at(1, 1) = 0.5;
  CHECK_THROWS_AS(jaccard(Tensor({4, 4}), gt), ContractViolation);
  CHECK_THROWS_AS(dice(Tensor({4, 4}), Tensor({4, 5})), ContractViolation);
  CHECK_THROWS_AS(evaluate_frame(Mask(4, 4), Mask(5, 4)), ContractViolation);
}

TEST_CASE("per-class frame evaluation on hard masks") {
  Mask gt(8, 8), pred(8, 8);
  for (int x = 0; x < 8; ++x) {
    gt.at(2, x) = 1;
    gt.at(5, x) = 2;
    pred.at(2, x) = 1;
    pred.at(5, x) = x < 4 ? 2 : 1;
  }
  const auto per_class = evaluate_frame(pred, gt);
  REQUIRE(per_class.size() == 2);
  CHECK(per_class[0].jaccard() == doctest::Approx(8.0 / 12));
  CHECK(per_class[1].jaccard() == doctest::Approx(0.5));
  const auto uni = evaluate_frame(pred, gt, 3, true);
  REQUIRE(uni.size() == 1);
  CHECK(uni[0].dice() == 1.0);
}

TEST_CASE("aggregation averages frames per video, then videos") {
  auto rec = [](const char* v, int f, double a, double b) {
    MetricValues x, y;
    x.v.fill(a);
    y.v.fill(b);
    return FrameRecord{v, f, {x, y}};
  };
  // Video b has three frames; the dataset mean still weights both videos equally.
  const MetricsReport r = aggregate({rec("b", 0, 0.2, 0.4), rec("a", 0, 1.0, 1.0), rec("b", 1, 0.2, 0.4),
                                     rec("b", 2, 0.2, 0.4)});
  REQUIRE(r.videos.size() == 2);
  CHECK(r.videos[0].video == "a");
  CHECK(r.videos[1].frames == 3);
  CHECK(r.videos[1].mean.v[2] == doctest::Approx(0.3));
  CHECK(r.mean.v[0] == doctest::Approx(0.65));
  CHECK(r.per_class[0].v[4] == doctest::Approx(0.6));
  CHECK(r.per_class[1].v[4] == doctest::Approx(0.7));

  const std::string csv = report_csv(r);
  CHECK(csv ==
        "scope,Jaccard,Dice,S_alpha,F_beta_w,E_phi_mn\n"
        "a,1.000000,1.000000,1.000000,1.000000,1.000000\n"
        "b,0.300000,0.300000,0.300000,0.300000,0.300000\n"
        "class1,0.600000,0.600000,0.600000,0.600000,0.600000\n"
        "class2,0.700000,0.700000,0.700000,0.700000,0.700000\n"
        "mean,0.650000,0.650000,0.650000,0.650000,0.650000\n");
  const auto j = nlohmann::json::parse(report_json(r));
  CHECK(j["mean"]["Dice"].get<double>() == 0.65);
  CHECK(j["videos"][1]["frames"].get<int>() == 3);
  CHECK(report_json(r) == report_json(r));
  CHECK_THROWS_AS(aggregate({}), ContractViolation);
}
