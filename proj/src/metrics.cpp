#include "hrvvs/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "hrvvs/errors.hpp"
#include "json.hpp"

namespace hrvvs::metrics {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

void check_pair(const Tensor& pred, const Tensor& gt) {
  if (pred.rank() != 2 || pred.shape() != gt.shape())
    throw ContractViolation("metrics: prediction " + shape_string(pred.shape()) + " vs ground truth " +
                            shape_string(gt.shape()));
  for (double g : gt.values())
    if (g != 0.0 && g != 1.0) throw ContractViolation("metrics: ground truth must be binary");
}

struct Counts {
  double inter = 0, pred = 0, gt = 0;
};

Counts overlap(const Tensor& pred, const Tensor& gt) {
  Counts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] >= 0.5, g = gt[i] == 1.0;
    c.inter += p && g;
    c.pred += p;
    c.gt += g;
  }
  return c;
}

// ---- S-measure -------------------------------------------------------------

double object_score(const Tensor& pred, const Tensor& gt, bool foreground) {
  double s = 0.0, n = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if ((gt[i] == 1.0) == foreground) {
      s += foreground ? pred[i] : 1.0 - pred[i];
      n += 1.0;
    }
  if (n == 0.0) return 0.0;
  const double x = s / n;
  double var = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if ((gt[i] == 1.0) == foreground) {
      const double v = (foreground ? pred[i] : 1.0 - pred[i]) - x;
      var += v * v;
    }
  const double sigma = n > 1.0 ? std::sqrt(var / (n - 1.0)) : 0.0;
  return 2.0 * x / (x * x + 1.0 + sigma + kEps);
}

double ssim_block(const Tensor& pred, const Tensor& gt, int y0, int y1, int x0, int x1) {
  const int w = pred.dim(1);
  const double n = static_cast<double>(y1 - y0) * (x1 - x0);
  if (n == 0.0) return 0.0;
  double mx = 0, my = 0;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      mx += pred[static_cast<std::size_t>(y) * w + x];
      my += gt[static_cast<std::size_t>(y) * w + x];
    }
  mx /= n;
  my /= n;
  double sx = 0, sy = 0, sxy = 0;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      const double a = pred[static_cast<std::size_t>(y) * w + x] - mx;
      const double b = gt[static_cast<std::size_t>(y) * w + x] - my;
      sx += a * a;
      sy += b * b;
      sxy += a * b;
    }
  const double d = std::max(1.0, n - 1.0);
  sx /= d;
  sy /= d;
  sxy /= d;
  const double a = 4.0 * mx * my * sxy;
  const double b = (mx * mx + my * my) * (sx + sy);
  if (a != 0.0) return a / (b + kEps);
  return b == 0.0 ? 1.0 : 0.0;
}

double region_score(const Tensor& pred, const Tensor& gt) {
  const int h = gt.dim(0), w = gt.dim(1);
  double sy = 0, sx = 0, n = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (gt.at(y, x) == 1.0) {
        sy += y;
        sx += x;
        n += 1;
      }
  // Split point: one past the rounded centroid (half-to-even rounding).
  int cx, cy;
  if (n == 0) {
    cx = static_cast<int>(std::nearbyint(w / 2.0)) + 1;
    cy = static_cast<int>(std::nearbyint(h / 2.0)) + 1;
  } else {
    cx = static_cast<int>(std::nearbyint(sx / n)) + 1;
    cy = static_cast<int>(std::nearbyint(sy / n)) + 1;
  }
  cx = std::clamp(cx, 0, w);
  cy = std::clamp(cy, 0, h);
  const double area = static_cast<double>(h) * w;
  const double w1 = cx * cy / area, w2 = (w - cx) * cy / area, w3 = cx * (h - cy) / area;
  const double w4 = 1.0 - w1 - w2 - w3;
  return w1 * ssim_block(pred, gt, 0, cy, 0, cx) + w2 * ssim_block(pred, gt, 0, cy, cx, w) +
         w3 * ssim_block(pred, gt, cy, h, 0, cx) + w4 * ssim_block(pred, gt, cy, h, cx, w);
}

// ---- E-measure -------------------------------------------------------------

double enhanced_alignment(const std::vector<double>& fg, const Tensor& gt) {
  const std::size_t n = fg.size();
  double gt_sum = 0.0;
  for (double g : gt.values()) gt_sum += g;
  double total = 0.0;
  if (gt_sum == 0.0) {
    for (double f : fg) total += 1.0 - f;
  } else if (gt_sum == static_cast<double>(n)) {
    for (double f : fg) total += f;
  } else {
    double mf = 0.0;
    for (double f : fg) mf += f;
    mf /= static_cast<double>(n);
    const double mg = gt_sum / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double a = fg[i] - mf, b = gt[i] - mg;
      const double align = 2.0 * a * b / (a * a + b * b + kEps);
      total += (align + 1.0) * (align + 1.0) / 4.0;
    }
  }
  return total / static_cast<double>(n);
}

// 1-D squared distance transform of sampled function f (inf = no site).
// Writes distances and the argmin site.
void dt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& arg) {
  const int n = static_cast<int>(f.size());
  std::vector<int> v;
  std::vector<double> z;
  for (int q = 0; q < n; ++q) {
    if (std::isinf(f[static_cast<std::size_t>(q)])) continue;
    while (!v.empty()) {
      const int p = v.back();
      const double s = ((f[static_cast<std::size_t>(q)] + static_cast<double>(q) * q) -
                        (f[static_cast<std::size_t>(p)] + static_cast<double>(p) * p)) /
                       (2.0 * (q - p));
      if (s <= z.back()) {
        v.pop_back();
        z.pop_back();
      } else {
        v.push_back(q);
        z.push_back(s);
        break;
      }
    }
    if (v.empty()) {
      v.push_back(q);
      z.assign(1, -std::numeric_limits<double>::infinity());
    }
  }
  if (v.empty()) {
    std::fill(d.begin(), d.end(), std::numeric_limits<double>::infinity());
    std::fill(arg.begin(), arg.end(), -1);
    return;
  }
  std::size_t k = 0;
  for (int x = 0; x < n; ++x) {
    while (k + 1 < v.size() && z[k + 1] < x) ++k;
    const int q = v[k];
    d[static_cast<std::size_t>(x)] = static_cast<double>(x - q) * (x - q) + f[static_cast<std::size_t>(q)];
    arg[static_cast<std::size_t>(x)] = q;
  }
}

}  // namespace

DistanceField distance_transform(const Tensor& binary) {
  if (binary.rank() != 2) throw ContractViolation("distance_transform: expected H×W");
  const int h = binary.dim(0), w = binary.dim(1);
  const double inf = std::numeric_limits<double>::infinity();
  // Columns first: squared distance to the nearest site in the same column.
  std::vector<double> col_d(static_cast<std::size_t>(h) * w);
  std::vector<int> col_row(static_cast<std::size_t>(h) * w);
  {
    std::vector<double> f(static_cast<std::size_t>(h)), d(static_cast<std::size_t>(h));
    std::vector<int> a(static_cast<std::size_t>(h));
    for (int x = 0; x < w; ++x) {
      for (int y = 0; y < h; ++y) f[static_cast<std::size_t>(y)] = binary.at(y, x) != 0.0 ? 0.0 : inf;
      dt_1d(f, d, a);
      for (int y = 0; y < h; ++y) {
        col_d[static_cast<std::size_t>(y) * w + x] = d[static_cast<std::size_t>(y)];
        col_row[static_cast<std::size_t>(y) * w + x] = a[static_cast<std::size_t>(y)];
      }
    }
  }
  DistanceField out;
  out.distance.resize(static_cast<std::size_t>(h) * w);
  out.nearest.resize(static_cast<std::size_t>(h) * w);
  std::vector<double> f(static_cast<std::size_t>(w)), d(static_cast<std::size_t>(w));
  std::vector<int> a(static_cast<std::size_t>(w));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) f[static_cast<std::size_t>(x)] = col_d[static_cast<std::size_t>(y) * w + x];
    dt_1d(f, d, a);
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const int q = a[static_cast<std::size_t>(x)];
      out.distance[i] = std::sqrt(d[static_cast<std::size_t>(x)]);
      out.nearest[i] = q < 0 ? -1 : col_row[static_cast<std::size_t>(y) * w + q] * w + q;
    }
  }
  return out;
}

double jaccard(const Tensor& pred, const Tensor& gt) {
  check_pair(pred, gt);
  const Counts c = overlap(pred, gt);
  const double uni = c.pred + c.gt - c.inter;
  return uni == 0.0 ? 1.0 : c.inter / uni;
}

double dice(const Tensor& pred, const Tensor& gt) {
  check_pair(pred, gt);
  const Counts c = overlap(pred, gt);
  return c.pred + c.gt == 0.0 ? 1.0 : 2.0 * c.inter / (c.pred + c.gt);
}

double s_measure(const Tensor& pred, const Tensor& gt, double alpha) {
  check_pair(pred, gt);
  const double n = static_cast<double>(gt.size());
  const double y = sum(gt) / n;
  double q;
  if (y == 0.0) {
    q = 1.0 - sum(pred) / n;
  } else if (y == 1.0) {
    q = sum(pred) / n;
  } else {
    const double so = y * object_score(pred, gt, true) + (1.0 - y) * object_score(pred, gt, false);
    q = alpha * so + (1.0 - alpha) * region_score(pred, gt);
  }
  return std::clamp(q, 0.0, 1.0);
}

double weighted_f(const Tensor& pred, const Tensor& gt, double beta) {
  check_pair(pred, gt);
  const int h = gt.dim(0), w = gt.dim(1);
  const std::size_t n = gt.size();
  const double gt_sum = sum(gt);
  if (gt_sum == 0.0) {
    for (double p : pred.values())
      if (p != 0.0) return 0.0;
    return 1.0;
  }
  const DistanceField dist = distance_transform(gt);
  std::vector<double> err(n), et(n);
  for (std::size_t i = 0; i < n; ++i) err[i] = std::abs(pred[i] - gt[i]);
  // Background pixels borrow the error of their nearest foreground pixel.
  for (std::size_t i = 0; i < n; ++i)
    et[i] = gt[i] == 1.0 ? err[i] : err[static_cast<std::size_t>(dist.nearest[i])];

  // 7×7 Gaussian (σ = 5), normalised, zero padding.
  constexpr int r = 3;
  double kernel[2 * r + 1][2 * r + 1];
  double ksum = 0.0;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) ksum += kernel[dy + r][dx + r] = std::exp(-(dx * dx + dy * dy) / (2.0 * 25.0));
  for (auto& row : kernel)
    for (double& k : row) k /= ksum;

  double tp_w = gt_sum, fp_w = 0.0, fg_err = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      double ew;
      if (gt[i] == 1.0) {
        double ea = 0.0;
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx) {
            const int yy = y + dy, xx = x + dx;
            if (yy >= 0 && yy < h && xx >= 0 && xx < w)
              ea += kernel[dy + r][dx + r] * et[static_cast<std::size_t>(yy) * w + xx];
          }
        ew = std::min(err[i], ea);
        fg_err += ew;
      } else {
        const double importance = 2.0 - std::exp(std::log(0.5) / 5.0 * dist.distance[i]);
        ew = err[i] * importance;
        fp_w += ew;
      }
    }
  tp_w -= fg_err;
  const double recall = 1.0 - fg_err / gt_sum;
  const double precision = tp_w / (kEps + tp_w + fp_w);
  const double b2 = beta * beta;
  return std::clamp((1.0 + b2) * recall * precision / (kEps + recall + b2 * precision), 0.0, 1.0);
}

double e_measure_at(const Tensor& pred, const Tensor& gt, double threshold) {
  check_pair(pred, gt);
  std::vector<double> fg(pred.size());
  for (std::size_t i = 0; i < fg.size(); ++i) fg[i] = pred[i] >= threshold ? 1.0 : 0.0;
  return enhanced_alignment(fg, gt);
}

double e_measure_mean(const Tensor& pred, const Tensor& gt) {
  check_pair(pred, gt);
  double total = 0.0;
  double last_value = 0.0;
  std::vector<double> last_fg;
  for (int i = 0; i < 256; ++i) {
    const double t = (i + 0.5) / 256.0;
    std::vector<double> fg(pred.size());
    for (std::size_t j = 0; j < fg.size(); ++j) fg[j] = pred[j] >= t ? 1.0 : 0.0;
    // Hard maps binarise identically at most thresholds; reuse the value.
    if (fg != last_fg) {
      last_value = enhanced_alignment(fg, gt);
      last_fg = std::move(fg);
    }
    total += last_value;
  }
  return total / 256.0;
}

MetricValues evaluate_pair(const Tensor& pred, const Tensor& gt) {
  return MetricValues{{jaccard(pred, gt), dice(pred, gt), s_measure(pred, gt), weighted_f(pred, gt),
                       e_measure_mean(pred, gt)}};
}

std::vector<MetricValues> evaluate_frame(const Mask& pred, const Mask& gt, int classes, bool union_mode) {
  if (pred.height != gt.height || pred.width != gt.width)
    throw ContractViolation("evaluate_frame: mask sizes differ");
  auto binary = [](const Mask& m, auto&& keep) {
    Tensor t({m.height, m.width});
    for (std::size_t i = 0; i < m.size(); ++i) t[i] = keep(m.labels[i]) ? 1.0 : 0.0;
    return t;
  };
  std::vector<MetricValues> out;
  if (union_mode) {
    auto fg = [](std::uint8_t v) { return v > 0; };
    out.push_back(evaluate_pair(binary(pred, fg), binary(gt, fg)));
    return out;
  }
  for (int c = 1; c < classes; ++c) {
    auto is_c = [c](std::uint8_t v) { return v == c; };
    out.push_back(evaluate_pair(binary(pred, is_c), binary(gt, is_c)));
  }
  return out;
}

MetricValues average(const std::vector<MetricValues>& values) {
  if (values.empty()) throw ContractViolation("metrics: nothing to average");
  MetricValues m;
  for (const MetricValues& v : values)
    for (std::size_t k = 0; k < m.v.size(); ++k) m.v[k] += v.v[k];
  for (double& x : m.v) x /= static_cast<double>(values.size());
  return m;
}

MetricsReport aggregate(const std::vector<FrameRecord>& frames) {
  if (frames.empty()) throw ContractViolation("aggregate: no frames");
  std::map<std::string, std::vector<const FrameRecord*>> by_video;
  for (const FrameRecord& f : frames) by_video[f.video].push_back(&f);
  const std::size_t classes = frames.front().per_class.size();
  MetricsReport report;
  std::vector<MetricValues> video_means;
  std::vector<std::vector<MetricValues>> class_video_means(classes);
  for (const auto& [id, list] : by_video) {
    VideoSummary s;
    s.video = id;
    s.frames = static_cast<int>(list.size());
    std::vector<MetricValues> averaged;
    for (std::size_t c = 0; c < classes; ++c) {
      std::vector<MetricValues> col;
      for (const FrameRecord* f : list) {
        if (f->per_class.size() != classes) throw ContractViolation("aggregate: class count differs between frames");
        col.push_back(f->per_class[c]);
      }
      s.per_class.push_back(average(col));
      class_video_means[c].push_back(s.per_class.back());
    }
    for (const FrameRecord* f : list) averaged.push_back(average(f->per_class));
    s.mean = average(averaged);
    video_means.push_back(s.mean);
    report.videos.push_back(std::move(s));
  }
  report.mean = average(video_means);
  for (const auto& c : class_video_means) report.per_class.push_back(average(c));
  return report;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string csv_row(const std::string& scope, const MetricValues& m) {
  std::string row = scope;
  for (double v : m.v) row += "," + fmt(v);
  return row + "\n";
}

nlohmann::ordered_json values_json(const MetricValues& m) {
  nlohmann::ordered_json j;
  for (std::size_t k = 0; k < kColumns.size(); ++k) j[kColumns[k]] = std::stod(fmt(m.v[k]));
  return j;
}

}  // namespace

std::string report_csv(const MetricsReport& report) {
  std::string out = "scope";
  for (const char* c : kColumns) out += std::string(",") + c;
  out += "\n";
  for (const VideoSummary& v : report.videos) out += csv_row(v.video, v.mean);
  for (std::size_t c = 0; c < report.per_class.size(); ++c)
    out += csv_row("class" + std::to_string(c + 1), report.per_class[c]);
  out += csv_row("mean", report.mean);
  return out;
}

std::string report_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["columns"] = kColumns;
  j["mean"] = values_json(report.mean);
  nlohmann::ordered_json classes = nlohmann::ordered_json::array();
  for (const MetricValues& m : report.per_class) classes.push_back(values_json(m));
  j["per_class"] = classes;
  nlohmann::ordered_json videos = nlohmann::ordered_json::array();
  for (const VideoSummary& v : report.videos) {
    nlohmann::ordered_json e;
    e["video"] = v.video;
    e["frames"] = v.frames;
    e["mean"] = values_json(v.mean);
    videos.push_back(e);
  }
  j["videos"] = videos;
  return j.dump(2) + "\n";
}

}  // namespace hrvvs::metrics
