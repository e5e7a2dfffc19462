#include "hrvvs/optim.hpp"

#include <cmath>

namespace hrvvs {

double poly_lr(double base_lr, long step, long total_steps, double power) {
  if (total_steps <= 0) return 0.0;
  const double frac = 1.0 - static_cast<double>(step) / static_cast<double>(total_steps);
  return frac <= 0.0 ? 0.0 : base_lr * std::pow(frac, power);
}

void round_to_float32(Tensor& t) {
  for (double& v : t.values()) v = static_cast<double>(static_cast<float>(v));
}

void Adam::step(ParamStore& store, double learning_rate) {
  ++steps_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(steps_));
  for (auto& [name, param] : store.trainable()) {
    const Tensor g = param.grad();
    Tensor& m = m_.try_emplace(name, param.shape(), 0.0).first->second;
    Tensor& v = v_.try_emplace(name, param.shape(), 0.0).first->second;
    Tensor& w = param.mutable_value();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g[i];
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g[i] * g[i];
      w[i] -= learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + options_.eps);
    }
    if (options_.float32_state) {
      round_to_float32(w);
      round_to_float32(m);
      round_to_float32(v);
    }
  }
  store.zero_grad();
}

}  // namespace hrvvs
