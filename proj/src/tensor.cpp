#include "hrvvs/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hrvvs/errors.hpp"
#include "resample_kernels.hpp"

namespace hrvvs {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ContractViolation("negative dimension in shape");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(values.begin(), values.end()) {
  if (data_.size() != shape_size(shape_))
    throw ContractViolation("tensor data size does not match shape " + shape_string(shape_));
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size())
    throw ContractViolation("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  Tensor out = *this;
  out.shape_ = std::move(shape);
  return out;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ContractViolation("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double sum(const Tensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += v;
  return s;
}

double mean(const Tensor& t) { return t.empty() ? 0.0 : sum(t) / static_cast<double>(t.size()); }

namespace {

void require_chw(const Tensor& t, const char* what) {
  if (t.rank() != 3) throw ContractViolation(std::string(what) + ": expected C×H×W tensor, got " + shape_string(t.shape()));
}

}  // namespace

Tensor resize_bilinear(const Tensor& chw, int out_h, int out_w) {
  require_chw(chw, "resize_bilinear");
  Tensor out({chw.dim(0), out_h, out_w});
  kernels::bilinear_forward(chw.data(), chw.dim(0), chw.dim(1), chw.dim(2), out.data(), out_h, out_w);
  return out;
}

Tensor resize_nearest(const Tensor& chw, int out_h, int out_w) {
  require_chw(chw, "resize_nearest");
  const int c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
  Tensor out({c, out_h, out_w});
  for (int k = 0; k < c; ++k)
    for (int y = 0; y < out_h; ++y) {
      const int sy = std::min(h - 1, static_cast<int>((static_cast<long long>(y) * h) / out_h));
      for (int x = 0; x < out_w; ++x) {
        const int sx = std::min(w - 1, static_cast<int>((static_cast<long long>(x) * w) / out_w));
        out.at(k, y, x) = chw.at(k, sy, sx);
      }
    }
  return out;
}

Tensor avg_pool(const Tensor& chw, int factor) {
  require_chw(chw, "avg_pool");
  if (factor < 1 || chw.dim(1) % factor || chw.dim(2) % factor)
    throw ContractViolation("avg_pool: factor must divide spatial dims");
  Tensor out({chw.dim(0), chw.dim(1) / factor, chw.dim(2) / factor});
  kernels::avg_pool_forward(chw.data(), chw.dim(0), chw.dim(1), chw.dim(2), factor, out.data());
  return out;
}

Tensor adaptive_avg_pool(const Tensor& chw, int out_h, int out_w) {
  require_chw(chw, "adaptive_avg_pool");
  if (out_h < 1 || out_w < 1 || out_h > chw.dim(1) || out_w > chw.dim(2))
    throw ContractViolation("adaptive_avg_pool: bad output size");
  Tensor out({chw.dim(0), out_h, out_w});
  kernels::adaptive_pool_forward(chw.data(), chw.dim(0), chw.dim(1), chw.dim(2), out.data(), out_h, out_w);
  return out;
}

Tensor crop(const Tensor& chw, int y0, int x0, int h, int w) {
  require_chw(chw, "crop");
  if (y0 < 0 || x0 < 0 || y0 + h > chw.dim(1) || x0 + w > chw.dim(2))
    throw ContractViolation("crop: window out of bounds");
  Tensor out({chw.dim(0), h, w});
  for (int c = 0; c < chw.dim(0); ++c)
    for (int y = 0; y < h; ++y)
      std::copy_n(chw.data() + (static_cast<std::size_t>(c) * chw.dim(1) + y0 + y) * chw.dim(2) + x0, w, &out.at(c, y, 0));
  return out;
}

void paste(Tensor& dst, const Tensor& src, int y0, int x0) {
  require_chw(dst, "paste");
  require_chw(src, "paste");
  if (src.dim(0) != dst.dim(0) || y0 < 0 || x0 < 0 || y0 + src.dim(1) > dst.dim(1) || x0 + src.dim(2) > dst.dim(2))
    throw ContractViolation("paste: source does not fit destination");
  for (int c = 0; c < src.dim(0); ++c)
    for (int y = 0; y < src.dim(1); ++y)
      std::copy_n(src.data() + (static_cast<std::size_t>(c) * src.dim(1) + y) * src.dim(2), src.dim(2), &dst.at(c, y0 + y, x0));
}

Tensor reflect_pad(const Tensor& chw, int out_h, int out_w) {
  require_chw(chw, "reflect_pad");
  const int h = chw.dim(1), w = chw.dim(2);
  if (out_h < h || out_w < w) throw ContractViolation("reflect_pad: output smaller than input");
  auto reflect = [](int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    return i < n ? i : period - i;
  };
  Tensor out({chw.dim(0), out_h, out_w});
  for (int c = 0; c < chw.dim(0); ++c)
    for (int y = 0; y < out_h; ++y)
      for (int x = 0; x < out_w; ++x) out.at(c, y, x) = chw.at(c, reflect(y, h), reflect(x, w));
  return out;
}

void sinusoid(double position, int dims, double* out, double base) {
  const int pairs = dims / 2;
  for (int i = 0; i < pairs; ++i) {
    const double freq = std::pow(base, -static_cast<double>(i) / std::max(1, pairs));
    out[2 * i] = std::sin(position * freq);
    out[2 * i + 1] = std::cos(position * freq);
  }
  if (dims % 2) out[dims - 1] = std::sin(position);
}

}  // namespace hrvvs
