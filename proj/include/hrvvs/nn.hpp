#pragma once

#include <map>
#include <string>
#include <vector>

#include "hrvvs/autograd.hpp"
#include "hrvvs/rng.hpp"

namespace hrvvs {

struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;  // required when training with dropout
};

/// Owns every named parameter of a model. Iteration is in name order so that
/// checkpoints and optimiser updates are deterministic.
class ParamStore {
 public:
  Var create(const std::string& name, Tensor init, bool trainable = true);
  const Var& get(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  const std::map<std::string, Var>& all() const { return params_; }
  std::vector<std::pair<std::string, Var>> trainable() const;

  /// Marks every parameter whose name starts with `prefix` (un)trainable.
  void set_trainable(const std::string& prefix, bool trainable);
  void zero_grad();
  std::size_t count() const;

 private:
  std::map<std::string, Var> params_;
};

enum class Init { He, Xavier, Zero };

Tensor init_tensor(Shape shape, Init init, int fan_in, Rng& rng);

struct Conv2d {
  Var weight;
  Var bias;
  int stride = 1;
  int pad = 0;

  Conv2d() = default;
  Conv2d(ParamStore& store, const std::string& name, int in, int out, int kernel, int stride, Rng& rng,
         Init init = Init::He);
  Var operator()(const Var& x) const { return conv2d(x, weight, bias, stride, pad); }
};

struct Linear {
  Var weight;
  Var bias;

  Linear() = default;
  Linear(ParamStore& store, const std::string& name, int in, int out, Rng& rng, Init init = Init::Xavier,
         bool with_bias = true);
  Var operator()(const Var& x) const { return linear(x, weight, bias); }
  int in_features() const { return weight.dim(1); }
  int out_features() const { return weight.dim(0); }
};

struct LayerNorm {
  Var gamma;
  Var beta;

  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& name, int dim);
  Var operator()(const Var& x) const { return layer_norm_rows(x, gamma, beta); }
};

/// Multi-head cross-attention with pre-projection layer normalisation on each
/// input. Queries and keys/values may have different widths; all are projected
/// to `model_dim`.
class CrossAttention {
 public:
  struct Options {
    int query_dim = 0;
    int key_dim = 0;
    int model_dim = 0;
    int out_dim = 0;  // defaults to query_dim
    int heads = 4;
    bool zero_init_output = true;
  };

  CrossAttention() = default;
  CrossAttention(ParamStore& store, const std::string& name, const Options& options, Rng& rng);

  /// Returns the output-projected attention (no residual, no dropout).
  Var operator()(const Var& queries, const Var& keys, const Var& values, Tensor* probs_out = nullptr) const;

  const Linear& output_projection() const { return out_; }
  const Linear& query_projection() const { return q_; }
  int heads() const { return heads_; }

 private:
  LayerNorm ln_q_, ln_k_, ln_v_;
  Linear q_, k_, v_, out_;
  int heads_ = 4;
};

}  // namespace hrvvs
