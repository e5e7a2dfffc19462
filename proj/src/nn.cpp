#include "hrvvs/nn.hpp"

#include <cmath>

#include "hrvvs/errors.hpp"

namespace hrvvs {

Var ParamStore::create(const std::string& name, Tensor init, bool trainable) {
  if (params_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  Var v(std::move(init), trainable);
  params_.emplace(name, v);
  return v;
}

const Var& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

std::vector<std::pair<std::string, Var>> ParamStore::trainable() const {
  std::vector<std::pair<std::string, Var>> out;
  for (const auto& [name, v] : params_)
    if (v.requires_grad()) out.emplace_back(name, v);
  return out;
}

void ParamStore::set_trainable(const std::string& prefix, bool trainable) {
  for (auto& [name, v] : params_)
    if (name.rfind(prefix, 0) == 0) {
      Var handle = v;
      handle.set_requires_grad(trainable);
    }
}

void ParamStore::zero_grad() {
  for (auto& [name, v] : params_) {
    Var handle = v;
    handle.zero_grad();
  }
}

std::size_t ParamStore::count() const {
  std::size_t n = 0;
  for (const auto& [name, v] : params_) n += v.value().size();
  return n;
}

Tensor init_tensor(Shape shape, Init init, int fan_in, Rng& rng) {
  Tensor t(std::move(shape), 0.0);
  if (init == Init::Zero) return t;
  const double std_dev = init == Init::He ? std::sqrt(2.0 / fan_in) : std::sqrt(1.0 / fan_in);
  for (double& v : t.values()) v = rng.normal() * std_dev;
  return t;
}

Conv2d::Conv2d(ParamStore& store, const std::string& name, int in, int out, int kernel, int stride_, Rng& rng,
               Init init)
    : stride(stride_), pad(kernel / 2) {
  weight = store.create(name + ".weight", init_tensor({out, in, kernel, kernel}, init, in * kernel * kernel, rng));
  bias = store.create(name + ".bias", Tensor({out}, 0.0));
}

Linear::Linear(ParamStore& store, const std::string& name, int in, int out, Rng& rng, Init init, bool with_bias) {
  weight = store.create(name + ".weight", init_tensor({out, in}, init, in, rng));
  if (with_bias) bias = store.create(name + ".bias", Tensor({out}, 0.0));
}

LayerNorm::LayerNorm(ParamStore& store, const std::string& name, int dim) {
  gamma = store.create(name + ".gamma", Tensor({dim}, 1.0));
  beta = store.create(name + ".beta", Tensor({dim}, 0.0));
}

CrossAttention::CrossAttention(ParamStore& store, const std::string& name, const Options& o, Rng& rng)
    : heads_(o.heads) {
  if (o.heads < 1 || o.model_dim % o.heads)
    throw ConfigError(name + ": head count " + std::to_string(o.heads) + " must divide model width " +
                      std::to_string(o.model_dim));
  const int out_dim = o.out_dim > 0 ? o.out_dim : o.query_dim;
  ln_q_ = LayerNorm(store, name + ".ln_q", o.query_dim);
  ln_k_ = LayerNorm(store, name + ".ln_k", o.key_dim);
  ln_v_ = LayerNorm(store, name + ".ln_v", o.key_dim);
  q_ = Linear(store, name + ".q", o.query_dim, o.model_dim, rng);
  k_ = Linear(store, name + ".k", o.key_dim, o.model_dim, rng);
  v_ = Linear(store, name + ".v", o.key_dim, o.model_dim, rng);
  out_ = Linear(store, name + ".out", o.model_dim, out_dim, rng, o.zero_init_output ? Init::Zero : Init::Xavier);
}

Var CrossAttention::operator()(const Var& queries, const Var& keys, const Var& values, Tensor* probs_out) const {
  if (queries.dim(1) != q_.in_features())
    throw ConfigError("cross-attention query width " + std::to_string(queries.dim(1)) + " != " +
                      std::to_string(q_.in_features()));
  if (keys.dim(1) != k_.in_features() || values.dim(1) != v_.in_features())
    throw ConfigError("cross-attention key/value width " + std::to_string(keys.dim(1)) + " != " +
                      std::to_string(k_.in_features()));
  const Var q = q_(ln_q_(queries));
  const Var k = k_(ln_k_(keys));
  const Var v = v_(ln_v_(values));
  return out_(attention(q, k, v, heads_, probs_out));
}

}  // namespace hrvvs
