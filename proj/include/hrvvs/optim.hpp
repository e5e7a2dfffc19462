#pragma once

#include <map>
#include <string>

#include "hrvvs/nn.hpp"

namespace hrvvs {

/// lr₀ · (1 − step/total)^power, clamped at zero past the end.
double poly_lr(double base_lr, long step, long total_steps, double power = 0.9);

class Adam {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    /// Round parameters and moments to float32 after each step so that the
    /// in-memory state equals what a float32 checkpoint stores.
    bool float32_state = true;
  };

  Adam() = default;
  explicit Adam(Options options) : options_(options) {}

  /// Applies one update to every trainable parameter of `store` that holds a
  /// gradient, then clears all gradients.
  void step(ParamStore& store, double learning_rate);

  long steps() const { return steps_; }
  void set_steps(long s) { steps_ = s; }
  std::map<std::string, Tensor>& first_moments() { return m_; }
  std::map<std::string, Tensor>& second_moments() { return v_; }
  const std::map<std::string, Tensor>& first_moments() const { return m_; }
  const std::map<std::string, Tensor>& second_moments() const { return v_; }

 private:
  Options options_;
  long steps_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

/// Rounds every value to the nearest float32.
void round_to_float32(Tensor& t);

}  // namespace hrvvs
