#pragma once

#include <array>
#include <string>
#include <vector>

#include "hrvvs/mask.hpp"
#include "hrvvs/tensor.hpp"

namespace hrvvs::metrics {

// All maps are H×W tensors. Predictions lie in [0,1]; ground truth is
// strictly binary (0 or 1). When both are empty every measure returns 1.

double jaccard(const Tensor& pred, const Tensor& gt);
double dice(const Tensor& pred, const Tensor& gt);
double s_measure(const Tensor& pred, const Tensor& gt, double alpha = 0.5);
double weighted_f(const Tensor& pred, const Tensor& gt, double beta = 1.0);
/// Enhanced alignment of the prediction binarised at `threshold` (≥).
double e_measure_at(const Tensor& pred, const Tensor& gt, double threshold);
/// Mean enhanced alignment over 256 thresholds at bin centres (i + 0.5)/256.
double e_measure_mean(const Tensor& pred, const Tensor& gt);

/// Euclidean distance to the nearest nonzero pixel, and that pixel's flat
/// index. Every pixel gets distance 0 and its own index if it is nonzero.
/// An all-zero input yields +inf distances and index −1.
struct DistanceField {
  std::vector<double> distance;
  std::vector<int> nearest;
};
DistanceField distance_transform(const Tensor& binary);

inline constexpr std::array<const char*, 5> kColumns{"Jaccard", "Dice", "S_alpha", "F_beta_w", "E_phi_mn"};

struct MetricValues {
  std::array<double, 5> v{};  // in kColumns order

  double jaccard() const { return v[0]; }
  double dice() const { return v[1]; }
  bool operator==(const MetricValues&) const = default;
};

MetricValues evaluate_pair(const Tensor& pred, const Tensor& gt);

/// Per vessel class (labels 1..classes−1) binary evaluation of hard masks.
/// With `union_mode` a single pass compares (label > 0) maps instead.
std::vector<MetricValues> evaluate_frame(const Mask& pred, const Mask& gt, int classes = 3, bool union_mode = false);

MetricValues average(const std::vector<MetricValues>& values);

struct FrameRecord {
  std::string video;
  int frame = 0;
  std::vector<MetricValues> per_class;
};

struct VideoSummary {
  std::string video;
  int frames = 0;
  MetricValues mean;                   // class-averaged
  std::vector<MetricValues> per_class;
};

struct MetricsReport {
  std::vector<VideoSummary> videos;  // sorted by id
  MetricValues mean;                 // mean of per-video class-averaged means
  std::vector<MetricValues> per_class;
};

/// Per-video means, then the mean over videos.
MetricsReport aggregate(const std::vector<FrameRecord>& frames);

std::string report_csv(const MetricsReport& report);
std::string report_json(const MetricsReport& report);

}  // namespace hrvvs::metrics
