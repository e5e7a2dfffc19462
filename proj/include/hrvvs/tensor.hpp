#pragma once

#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace hrvvs {

using Shape = std::vector<int>;

/// Cache-line aligned allocator. Vectorised kernels peel loops according to
/// the start address, so a fixed alignment keeps floating-point results
/// independent of where the heap happened to place a buffer.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlignment); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using Storage = std::vector<double, AlignedAllocator<double>>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major tensor of doubles. Image-like tensors are laid out C×H×W,
/// token sequences N×D.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor full(Shape shape, double v) { return Tensor(std::move(shape), v); }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  Storage& storage() { return data_; }
  const Storage& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // C×H×W accessors.
  double& at(int c, int y, int x) {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }
  double at(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }
  // N×D accessors.
  double& at(int r, int c) { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }
  double at(int r, int c) const { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }
  double* row(int r) { return data_.data() + static_cast<std::size_t>(r) * shape_[1]; }
  const double* row(int r) const { return data_.data() + static_cast<std::size_t>(r) * shape_[1]; }

  Tensor reshaped(Shape shape) const;
  void fill(double v);
  bool all_finite() const;

  /// Exact equality of shape and every element.
  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  Storage data_;
};

double max_abs_diff(const Tensor& a, const Tensor& b);
double sum(const Tensor& t);
double mean(const Tensor& t);

// Plain (non-differentiable) C×H×W resampling helpers. The differentiable
// counterparts live in autograd.hpp and share these kernels.
Tensor resize_bilinear(const Tensor& chw, int out_h, int out_w);
Tensor resize_nearest(const Tensor& chw, int out_h, int out_w);
Tensor avg_pool(const Tensor& chw, int factor);
Tensor adaptive_avg_pool(const Tensor& chw, int out_h, int out_w);
Tensor crop(const Tensor& chw, int y0, int x0, int h, int w);
void paste(Tensor& dst, const Tensor& src, int y0, int x0);
Tensor reflect_pad(const Tensor& chw, int out_h, int out_w);

/// Sinusoidal encoding of a scalar position into `dims` values
/// (sin/cos pairs at geometrically spaced frequencies).
void sinusoid(double position, int dims, double* out, double base = 100.0);

}  // namespace hrvvs
