#include <algorithm>
#include <cmath>

#include "eigen_maps.hpp"
#include "hrvvs/autograd.hpp"
#include "hrvvs/errors.hpp"
#include "resample_kernels.hpp"

namespace hrvvs {

namespace {

Tensor& pgrad(Node& self, std::size_t i) { return self.parents[i]->grad_buffer(); }
bool pneeds(const Node& self, std::size_t i) { return self.parents[i]->requires_grad; }
const Tensor& pvalue(const Node& self, std::size_t i) { return self.parents[i]->value; }

void require_chw(const Var& x, const char* what) {
  if (x.value().rank() != 3) throw ContractViolation(std::string(what) + ": expected C×H×W, got " + shape_string(x.shape()));
}

struct ConvGeom {
  int c, h, w, k, stride, pad, oh, ow;
};

void im2col(const double* x, const ConvGeom& g, double* cols) {
  const int hw = g.oh * g.ow;
  for (int c = 0; c < g.c; ++c)
    for (int ky = 0; ky < g.k; ++ky)
      for (int kx = 0; kx < g.k; ++kx) {
        double* row = cols + (static_cast<std::size_t>(c) * g.k * g.k + ky * g.k + kx) * hw;
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          double* dst = row + static_cast<std::size_t>(oy) * g.ow;
          if (iy < 0 || iy >= g.h) {
            std::fill_n(dst, g.ow, 0.0);
            continue;
          }
          const double* src = x + (static_cast<std::size_t>(c) * g.h + iy) * g.w;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : 0.0;
          }
        }
      }
}

void col2im(const double* cols, const ConvGeom& g, double* x) {
  const int hw = g.oh * g.ow;
  for (int c = 0; c < g.c; ++c)
    for (int ky = 0; ky < g.k; ++ky)
      for (int kx = 0; kx < g.k; ++kx) {
        const double* row = cols + (static_cast<std::size_t>(c) * g.k * g.k + ky * g.k + kx) * hw;
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          const double* src = row + static_cast<std::size_t>(oy) * g.ow;
          double* dst = x + (static_cast<std::size_t>(c) * g.h + iy) * g.w;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  require_chw(x, "conv2d");
  if (weight.value().rank() != 4 || weight.dim(1) != x.dim(0) || weight.dim(2) != weight.dim(3))
    throw ConfigError("conv2d: weight " + shape_string(weight.shape()) + " incompatible with input " +
                      shape_string(x.shape()));
  ConvGeom g{x.dim(0), x.dim(1), x.dim(2), weight.dim(2), stride, pad, 0, 0};
  g.oh = (g.h + 2 * pad - g.k) / stride + 1;
  g.ow = (g.w + 2 * pad - g.k) / stride + 1;
  if (g.oh <= 0 || g.ow <= 0) throw ConfigError("conv2d: empty output");
  const int o = weight.dim(0), ckk = g.c * g.k * g.k, hw = g.oh * g.ow;
  const bool direct = g.k == 1 && stride == 1 && pad == 0;
  const bool has_bias = bias.defined();
  if (has_bias && static_cast<int>(bias.value().size()) != o) throw ConfigError("conv2d: bias size mismatch");

  std::shared_ptr<Tensor> cols;
  const double* colp = x.value().data();
  if (!direct) {
    cols = std::make_shared<Tensor>(Shape{ckk, hw});
    im2col(x.value().data(), g, cols->data());
    colp = cols->data();
  }
  Tensor out({o, g.oh, g.ow});
  MatMap om(out.data(), o, hw);
  om.noalias() = ConstMatMap(weight.value().data(), o, ckk) * ConstMatMap(colp, ckk, hw);
  if (has_bias) om.colwise() += Eigen::Map<const Eigen::VectorXd>(bias.value().data(), o);

  std::vector<Var> parents{x, weight};
  if (has_bias) parents.push_back(bias);
  return make_result(std::move(out), parents, [g, o, ckk, hw, direct, cols, has_bias](Node& self) {
    ConstMatMap go(self.grad.data(), o, hw);
    const double* colp = direct ? pvalue(self, 0).data() : cols->data();
    if (pneeds(self, 1)) MatMap(pgrad(self, 1).data(), o, ckk).noalias() += go * ConstMatMap(colp, ckk, hw).transpose();
    if (has_bias && pneeds(self, 2)) Eigen::Map<Eigen::VectorXd>(pgrad(self, 2).data(), o) += go.rowwise().sum();
    if (pneeds(self, 0)) {
      if (direct) {
        MatMap(pgrad(self, 0).data(), ckk, hw).noalias() += ConstMatMap(pvalue(self, 1).data(), o, ckk).transpose() * go;
      } else {
        RowMat gcols = ConstMatMap(pvalue(self, 1).data(), o, ckk).transpose() * go;
        col2im(gcols.data(), g, pgrad(self, 0).data());
      }
    }
  });
}

Var resize_bilinear(const Var& x, int out_h, int out_w) {
  require_chw(x, "resize_bilinear");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h == out_h && w == out_w) return x;
  Tensor out({c, out_h, out_w});
  kernels::bilinear_forward(x.value().data(), c, h, w, out.data(), out_h, out_w);
  return make_result(std::move(out), {x}, [c, h, w, out_h, out_w](Node& self) {
    kernels::bilinear_backward(self.grad.data(), c, h, w, pgrad(self, 0).data(), out_h, out_w);
  });
}

Var upsample_nearest(const Var& x, int factor) {
  require_chw(x, "upsample_nearest");
  if (factor == 1) return x;
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor out({c, h * factor, w * factor});
  for (int k = 0; k < c; ++k)
    for (int y = 0; y < h * factor; ++y)
      for (int xx = 0; xx < w * factor; ++xx) out.at(k, y, xx) = x.value().at(k, y / factor, xx / factor);
  return make_result(std::move(out), {x}, [c, h, w, factor](Node& self) {
    Tensor& g = pgrad(self, 0);
    for (int k = 0; k < c; ++k)
      for (int y = 0; y < h * factor; ++y)
        for (int xx = 0; xx < w * factor; ++xx) g.at(k, y / factor, xx / factor) += self.grad.at(k, y, xx);
  });
}

Var avg_pool(const Var& x, int factor) {
  require_chw(x, "avg_pool");
  if (factor == 1) return x;
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (factor < 1 || h % factor || w % factor) throw ContractViolation("avg_pool: factor must divide spatial dims");
  Tensor out({c, h / factor, w / factor});
  kernels::avg_pool_forward(x.value().data(), c, h, w, factor, out.data());
  return make_result(std::move(out), {x}, [c, h, w, factor](Node& self) {
    Tensor& g = pgrad(self, 0);
    const double inv = 1.0 / (factor * factor);
    for (int k = 0; k < c; ++k)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) g.at(k, y, xx) += self.grad.at(k, y / factor, xx / factor) * inv;
  });
}

Var adaptive_avg_pool(const Var& x, int out_h, int out_w) {
  require_chw(x, "adaptive_avg_pool");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (out_h < 1 || out_w < 1 || out_h > h || out_w > w) throw ContractViolation("adaptive_avg_pool: bad output size");
  if (out_h == h && out_w == w) return x;
  Tensor out({c, out_h, out_w});
  kernels::adaptive_pool_forward(x.value().data(), c, h, w, out.data(), out_h, out_w);
  return make_result(std::move(out), {x}, [c, h, w, out_h, out_w](Node& self) {
    Tensor& g = pgrad(self, 0);
    for (int k = 0; k < c; ++k)
      for (int y = 0; y < out_h; ++y) {
        const auto [y0, y1] = kernels::adaptive_bin(y, h, out_h);
        for (int xx = 0; xx < out_w; ++xx) {
          const auto [x0, x1] = kernels::adaptive_bin(xx, w, out_w);
          const double v = self.grad.at(k, y, xx) / ((y1 - y0) * (x1 - x0));
          for (int a = y0; a < y1; ++a)
            for (int b = x0; b < x1; ++b) g.at(k, a, b) += v;
        }
      }
  });
}

Var softmax_channels(const Var& x) {
  require_chw(x, "softmax_channels");
  const int k = x.dim(0), hw = x.dim(1) * x.dim(2);
  Tensor out = x.value();
  for (int p = 0; p < hw; ++p) {
    double mx = -INFINITY;
    for (int c = 0; c < k; ++c) mx = std::max(mx, out[static_cast<std::size_t>(c) * hw + p]);
    double s = 0.0;
    for (int c = 0; c < k; ++c) {
      double& v = out[static_cast<std::size_t>(c) * hw + p];
      v = std::exp(v - mx);
      s += v;
    }
    for (int c = 0; c < k; ++c) out[static_cast<std::size_t>(c) * hw + p] /= s;
  }
  return make_result(std::move(out), {x}, [k, hw](Node& self) {
    Tensor& g = pgrad(self, 0);
    for (int p = 0; p < hw; ++p) {
      double dot = 0.0;
      for (int c = 0; c < k; ++c) {
        const std::size_t i = static_cast<std::size_t>(c) * hw + p;
        dot += self.grad[i] * self.value[i];
      }
      for (int c = 0; c < k; ++c) {
        const std::size_t i = static_cast<std::size_t>(c) * hw + p;
        g[i] += self.value[i] * (self.grad[i] - dot);
      }
    }
  });
}

Var blend(const Var& a, const Var& b, const Var& map) {
  require_chw(a, "blend");
  if (a.shape() != b.shape()) throw ContractViolation("blend: operand shape mismatch");
  const int c = a.dim(0), hw = a.dim(1) * a.dim(2);
  if (static_cast<int>(map.value().size()) != hw) throw ContractViolation("blend: map size mismatch");
  Tensor out(a.shape());
  const double* m = map.value().data();
  for (int k = 0; k < c; ++k)
    for (int p = 0; p < hw; ++p) {
      const std::size_t i = static_cast<std::size_t>(k) * hw + p;
      out[i] = m[p] * a.value()[i] + (1.0 - m[p]) * b.value()[i];
    }
  return make_result(std::move(out), {a, b, map}, [c, hw](Node& self) {
    const double* m = pvalue(self, 2).data();
    if (pneeds(self, 0)) {
      Tensor& g = pgrad(self, 0);
      for (int k = 0; k < c; ++k)
        for (int p = 0; p < hw; ++p) g[static_cast<std::size_t>(k) * hw + p] += self.grad[static_cast<std::size_t>(k) * hw + p] * m[p];
    }
    if (pneeds(self, 1)) {
      Tensor& g = pgrad(self, 1);
      for (int k = 0; k < c; ++k)
        for (int p = 0; p < hw; ++p)
          g[static_cast<std::size_t>(k) * hw + p] += self.grad[static_cast<std::size_t>(k) * hw + p] * (1.0 - m[p]);
    }
    if (pneeds(self, 2)) {
      Tensor& g = pgrad(self, 2);
      const Tensor& av = pvalue(self, 0);
      const Tensor& bv = pvalue(self, 1);
      for (int k = 0; k < c; ++k)
        for (int p = 0; p < hw; ++p) {
          const std::size_t i = static_cast<std::size_t>(k) * hw + p;
          g[static_cast<std::size_t>(p)] += self.grad[i] * (av[i] - bv[i]);
        }
    }
  });
}

Var crop(const Var& x, int y0, int x0, int h, int w) {
  require_chw(x, "crop");
  Tensor out = crop(x.value(), y0, x0, h, w);
  return make_result(std::move(out), {x}, [y0, x0, h, w](Node& self) {
    Tensor& g = pgrad(self, 0);
    for (int c = 0; c < self.value.dim(0); ++c)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) g.at(c, y0 + y, x0 + xx) += self.grad.at(c, y, xx);
  });
}

Var assemble_grid(std::span<const Var> tiles, int rows, int cols) {
  if (static_cast<int>(tiles.size()) != rows * cols || tiles.empty()) throw ContractViolation("assemble_grid: tile count mismatch");
  const Shape& s = tiles[0].shape();
  if (s.size() != 3) throw ContractViolation("assemble_grid: tiles must be C×H×W");
  for (const auto& t : tiles)
    if (t.shape() != s) throw ContractViolation("assemble_grid: tiles must share a shape");
  const int c = s[0], h = s[1], w = s[2];
  Tensor out({c, h * rows, w * cols});
  for (int r = 0; r < rows; ++r)
    for (int q = 0; q < cols; ++q) paste(out, tiles[static_cast<std::size_t>(r * cols + q)].value(), r * h, q * w);
  std::vector<Var> ps(tiles.begin(), tiles.end());
  return make_result(std::move(out), ps, [rows, cols, c, h, w](Node& self) {
    for (int r = 0; r < rows; ++r)
      for (int q = 0; q < cols; ++q) {
        const std::size_t i = static_cast<std::size_t>(r * cols + q);
        if (!pneeds(self, i)) continue;
        Tensor& g = pgrad(self, i);
        for (int k = 0; k < c; ++k)
          for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) g.at(k, y, xx) += self.grad.at(k, r * h + y, q * w + xx);
      }
  });
}

Var select_channel(const Var& x, int c) {
  require_chw(x, "select_channel");
  if (c < 0 || c >= x.dim(0)) throw ContractViolation("select_channel: channel out of range");
  const int h = x.dim(1), w = x.dim(2);
  const auto first = x.value().storage().begin() + static_cast<std::ptrdiff_t>(c) * h * w;
  Tensor out(Shape{1, h, w}, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(h) * w));
  return make_result(std::move(out), {x}, [c, h, w](Node& self) {
    Tensor& g = pgrad(self, 0);
    const std::size_t off = static_cast<std::size_t>(c) * h * w;
    for (std::size_t i = 0; i < static_cast<std::size_t>(h) * w; ++i) g[off + i] += self.grad[i];
  });
}

}  // namespace hrvvs
