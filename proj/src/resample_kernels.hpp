#pragma once

#include <algorithm>
#include <utility>
#include <vector>

namespace hrvvs::kernels {

// Half-pixel-centre bilinear taps along one axis (align_corners = false).
struct Tap {
  int i0;
  int i1;
  double w1;  // weight of i1; weight of i0 is 1 - w1
};

inline std::vector<Tap> bilinear_taps(int in, int out) {
  std::vector<Tap> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    int i0 = static_cast<int>(src);
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    taps[static_cast<std::size_t>(o)] = {i0, i1, src - i0};
  }
  return taps;
}

inline void bilinear_forward(const double* in, int c, int h, int w, double* out, int oh, int ow) {
  const auto ty = bilinear_taps(h, oh);
  const auto tx = bilinear_taps(w, ow);
  for (int k = 0; k < c; ++k) {
    const double* src = in + static_cast<std::size_t>(k) * h * w;
    double* dst = out + static_cast<std::size_t>(k) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      const Tap& a = ty[static_cast<std::size_t>(y)];
      const double* r0 = src + static_cast<std::size_t>(a.i0) * w;
      const double* r1 = src + static_cast<std::size_t>(a.i1) * w;
      for (int x = 0; x < ow; ++x) {
        const Tap& b = tx[static_cast<std::size_t>(x)];
        const double top = r0[b.i0] + (r0[b.i1] - r0[b.i0]) * b.w1;
        const double bot = r1[b.i0] + (r1[b.i1] - r1[b.i0]) * b.w1;
        dst[static_cast<std::size_t>(y) * ow + x] = top + (bot - top) * a.w1;
      }
    }
  }
}

inline void bilinear_backward(const double* gout, int c, int h, int w, double* gin, int oh, int ow) {
  const auto ty = bilinear_taps(h, oh);
  const auto tx = bilinear_taps(w, ow);
  for (int k = 0; k < c; ++k) {
    double* dst = gin + static_cast<std::size_t>(k) * h * w;
    const double* src = gout + static_cast<std::size_t>(k) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      const Tap& a = ty[static_cast<std::size_t>(y)];
      double* r0 = dst + static_cast<std::size_t>(a.i0) * w;
      double* r1 = dst + static_cast<std::size_t>(a.i1) * w;
      for (int x = 0; x < ow; ++x) {
        const Tap& b = tx[static_cast<std::size_t>(x)];
        const double g = src[static_cast<std::size_t>(y) * ow + x];
        const double gt = g * (1.0 - a.w1), gb = g * a.w1;
        r0[b.i0] += gt * (1.0 - b.w1);
        r0[b.i1] += gt * b.w1;
        r1[b.i0] += gb * (1.0 - b.w1);
        r1[b.i1] += gb * b.w1;
      }
    }
  }
}

inline void avg_pool_forward(const double* in, int c, int h, int w, int f, double* out) {
  const int oh = h / f, ow = w / f;
  const double inv = 1.0 / (f * f);
  for (int k = 0; k < c; ++k)
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        double s = 0.0;
        for (int dy = 0; dy < f; ++dy)
          for (int dx = 0; dx < f; ++dx)
            s += in[(static_cast<std::size_t>(k) * h + y * f + dy) * w + x * f + dx];
        out[(static_cast<std::size_t>(k) * oh + y) * ow + x] = s * inv;
      }
}

// Adaptive average pooling bins: [floor(i·in/out), ceil((i+1)·in/out)).
inline std::pair<int, int> adaptive_bin(int i, int in, int out) {
  const int start = (i * in) / out;
  const int end = ((i + 1) * in + out - 1) / out;
  return {start, end};
}

inline void adaptive_pool_forward(const double* in, int c, int h, int w, double* out, int oh, int ow) {
  for (int k = 0; k < c; ++k)
    for (int y = 0; y < oh; ++y) {
      const auto [y0, y1] = adaptive_bin(y, h, oh);
      for (int x = 0; x < ow; ++x) {
        const auto [x0, x1] = adaptive_bin(x, w, ow);
        double s = 0.0;
        for (int yy = y0; yy < y1; ++yy)
          for (int xx = x0; xx < x1; ++xx) s += in[(static_cast<std::size_t>(k) * h + yy) * w + xx];
        out[(static_cast<std::size_t>(k) * oh + y) * ow + x] = s / ((y1 - y0) * (x1 - x0));
      }
    }
}

}  // namespace hrvvs::kernels
