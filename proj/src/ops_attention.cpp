#include <cmath>

#include "eigen_maps.hpp"
#include "hrvvs/autograd.hpp"
#include "hrvvs/errors.hpp"

namespace hrvvs {

namespace {

using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

ConstStridedMap head_cols(const Tensor& t, int head, int dh) {
  return {t.data() + static_cast<std::ptrdiff_t>(head) * dh, t.dim(0), dh, Eigen::OuterStride<>(t.dim(1))};
}

StridedMap head_cols(Tensor& t, int head, int dh) {
  return {t.data() + static_cast<std::ptrdiff_t>(head) * dh, t.dim(0), dh, Eigen::OuterStride<>(t.dim(1))};
}

}  // namespace

Var attention(const Var& q, const Var& k, const Var& v, int heads, Tensor* probs_out) {
  if (q.value().rank() != 2 || k.value().rank() != 2 || v.value().rank() != 2)
    throw ContractViolation("attention: expected token matrices");
  const int nq = q.dim(0), nk = k.dim(0), d = q.dim(1);
  if (k.dim(1) != d || v.dim(1) != d || v.dim(0) != nk)
    throw ConfigError("attention: query/key/value widths differ: " + shape_string(q.shape()) + " " +
                      shape_string(k.shape()) + " " + shape_string(v.shape()));
  if (heads < 1 || d % heads) throw ConfigError("attention: head count must divide model width");
  if (nk == 0) throw ContractViolation("attention: empty key set");
  const int dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  auto probs = std::make_shared<Tensor>(Shape{heads, nq, nk});
  Tensor out({nq, d});
  for (int h = 0; h < heads; ++h) {
    MatMap p(probs->data() + static_cast<std::size_t>(h) * nq * nk, nq, nk);
    p.noalias() = head_cols(q.value(), h, dh) * head_cols(k.value(), h, dh).transpose();
    p *= inv_sqrt;
    for (int r = 0; r < nq; ++r) {
      const double mx = p.row(r).maxCoeff();
      p.row(r) = (p.row(r).array() - mx).exp();
      p.row(r) /= p.row(r).sum();
    }
    head_cols(out, h, dh).noalias() = p * head_cols(v.value(), h, dh);
  }
  if (probs_out) *probs_out = *probs;

  return make_result(std::move(out), {q, k, v}, [probs, heads, nq, nk, dh, inv_sqrt](Node& self) {
    const Tensor& qv = self.parents[0]->value;
    const Tensor& kv = self.parents[1]->value;
    const Tensor& vv = self.parents[2]->value;
    for (int h = 0; h < heads; ++h) {
      ConstMatMap p(probs->data() + static_cast<std::size_t>(h) * nq * nk, nq, nk);
      const auto go = head_cols(self.grad, h, dh);
      if (self.parents[2]->requires_grad) head_cols(self.parents[2]->grad_buffer(), h, dh).noalias() += p.transpose() * go;
      if (!self.parents[0]->requires_grad && !self.parents[1]->requires_grad) continue;
      RowMat dp = go * head_cols(vv, h, dh).transpose();
      for (int r = 0; r < nq; ++r) {
        const double dot = dp.row(r).dot(p.row(r));
        dp.row(r) = p.row(r).array() * (dp.row(r).array() - dot);
      }
      dp *= inv_sqrt;
      if (self.parents[0]->requires_grad) head_cols(self.parents[0]->grad_buffer(), h, dh).noalias() += dp * head_cols(kv, h, dh);
      if (self.parents[1]->requires_grad)
        head_cols(self.parents[1]->grad_buffer(), h, dh).noalias() += dp.transpose() * head_cols(qv, h, dh);
    }
  });
}

Var dropout(const Var& x, double p, bool training, Rng* rng) {
  if (!training || p <= 0.0) return x;
  if (p >= 1.0) throw ConfigError("dropout: rate must be below 1");
  if (!rng) throw ContractViolation("dropout: training mode requires a generator");
  auto mask = std::make_shared<std::vector<double>>(x.value().size());
  const double keep = 1.0 / (1.0 - p);
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = rng->uniform() < p ? 0.0 : keep;
    out[i] *= (*mask)[i];
  }
  return make_result(std::move(out), {x}, [mask](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (*mask)[i];
  });
}

}  // namespace hrvvs
