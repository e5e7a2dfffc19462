#include "hrvvs/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "eigen_maps.hpp"
#include "hrvvs/errors.hpp"

namespace hrvvs {

Tensor& Node::grad_buffer() {
  if (grad.size() != value.size() || grad.shape() != value.shape()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Var::grad() const {
  if (node_->grad.shape() == node_->value.shape() && node_->grad.size() == node_->value.size()) return node_->grad;
  return Tensor(node_->value.shape(), 0.0);
}

Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  const bool needs = std::any_of(parents.begin(), parents.end(), [](const Var& p) { return p.requires_grad(); });
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node());
    node->backward_fn = std::move(fn);
  }
  return Var(std::move(node));
}

void backward(const Var& root) {
  if (!root.defined() || root.value().size() != 1) throw ContractViolation("backward: root must be a scalar");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.size() == n->value.size()) n->backward_fn(*n);
  }
  // Free intermediate gradients; leaves keep theirs.
  for (Node* n : order)
    if (n->backward_fn) n->grad = Tensor();
}

Var detach(const Var& x) { return Var::constant(x.value()); }

namespace {

void require_same_shape(const Var& a, const Var& b, const char* what) {
  if (a.shape() != b.shape())
    throw ContractViolation(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                            shape_string(b.shape()));
}

Tensor& pgrad(Node& self, std::size_t i) { return self.parents[i]->grad_buffer(); }
bool pneeds(const Node& self, std::size_t i) { return self.parents[i]->requires_grad; }
const Tensor& pvalue(const Node& self, std::size_t i) { return self.parents[i]->value; }

}  // namespace

// ---- elementwise -----------------------------------------------------------

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p)
      if (pneeds(self, p)) {
        Tensor& g = pgrad(self, p);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    if (pneeds(self, 0)) {
      Tensor& g = pgrad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pneeds(self, 1)) {
      Tensor& g = pgrad(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    if (pneeds(self, 0)) {
      Tensor& g = pgrad(self, 0);
      const Tensor& o = pvalue(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * o[i];
    }
    if (pneeds(self, 1)) {
      Tensor& g = pgrad(self, 1);
      const Tensor& o = pvalue(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * o[i];
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= s;
  return make_result(std::move(out), {a}, [s](Node& self) {
    Tensor& g = pgrad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
  });
}

Var add_scalar(const Var& a, double s) {
  Tensor out = a.value();
  for (double& v : out.values()) v += s;
  return make_result(std::move(out), {a}, [](Node& self) {
    Tensor& g = pgrad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Var scale_by(const Var& a, const Var& s) {
  if (s.value().size() != 1) throw ContractViolation("scale_by: scale must hold one element");
  const double k = s.value()[0];
  Tensor out = a.value();
  for (double& v : out.values()) v *= k;
  return make_result(std::move(out), {a, s}, [k](Node& self) {
    if (pneeds(self, 0)) {
      Tensor& g = pgrad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * k;
    }
    if (pneeds(self, 1)) {
      const Tensor& av = pvalue(self, 0);
      double acc = 0.0;
      for (std::size_t i = 0; i < av.size(); ++i) acc += self.grad[i] * av[i];
      pgrad(self, 1)[0] += acc;
    }
  });
}

Var relu(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.values()) v = v < 0.0 ? 0.0 : v;  // NaN propagates
  return make_result(std::move(out), {x}, [](Node& self) {
    Tensor& g = pgrad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (self.value[i] > 0.0) g[i] += self.grad[i];
  });
}

Var sigmoid(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
  return make_result(std::move(out), {x}, [](Node& self) {
    Tensor& g = pgrad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * self.value[i] * (1.0 - self.value[i]);
  });
}

Var square(const Var& x) { return mul(x, x); }

Var reciprocal(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.values()) {
    if (v == 0.0) throw ContractViolation("reciprocal: division by zero");
    v = 1.0 / v;
  }
  return make_result(std::move(out), {x}, [](Node& self) {
    Tensor& g = pgrad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i] * self.value[i] * self.value[i];
  });
}

// ---- reductions ------------------------------------------------------------

Var sum(const Var& x) {
  Tensor out({1}, sum(x.value()));
  return make_result(std::move(out), {x}, [](Node& self) {
    Tensor& g = pgrad(self, 0);
    const double s = self.grad[0];
    for (double& v : g.values()) v += s;
  });
}

Var mean(const Var& x) {
  const double n = static_cast<double>(std::max<std::size_t>(1, x.value().size()));
  return scale(sum(x), 1.0 / n);
}

Var mse(const Var& a, const Var& b) { return mean(square(sub(a, b))); }

Var element(const Var& x, int index) {
  if (index < 0 || static_cast<std::size_t>(index) >= x.value().size()) throw ContractViolation("element: index out of range");
  Tensor out({1}, x.value()[static_cast<std::size_t>(index)]);
  return make_result(std::move(out), {x}, [index](Node& self) {
    pgrad(self, 0)[static_cast<std::size_t>(index)] += self.grad[0];
  });
}

// ---- shape -----------------------------------------------------------------

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make_result(std::move(out), {x}, [](Node& self) {
    Tensor& g = pgrad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Var transpose(const Var& x) {
  if (x.value().rank() != 2) throw ContractViolation("transpose: expected a matrix");
  const int n = x.dim(0), m = x.dim(1);
  Tensor out({m, n});
  MatMap(out.data(), m, n) = ConstMatMap(x.value().data(), n, m).transpose();
  return make_result(std::move(out), {x}, [n, m](Node& self) {
    MatMap(pgrad(self, 0).data(), n, m) += ConstMatMap(self.grad.data(), m, n).transpose();
  });
}

Var chw_to_tokens(const Var& x) {
  if (x.value().rank() != 3) throw ContractViolation("chw_to_tokens: expected C×H×W");
  const int c = x.dim(0), hw = x.dim(1) * x.dim(2);
  Tensor out({hw, c});
  MatMap(out.data(), hw, c) = ConstMatMap(x.value().data(), c, hw).transpose();
  return make_result(std::move(out), {x}, [c, hw](Node& self) {
    MatMap(pgrad(self, 0).data(), c, hw) += ConstMatMap(self.grad.data(), hw, c).transpose();
  });
}

Var tokens_to_chw(const Var& x, int h, int w) {
  if (x.value().rank() != 2 || x.dim(0) != h * w) throw ContractViolation("tokens_to_chw: token count mismatch");
  const int c = x.dim(1), hw = h * w;
  Tensor out({c, h, w});
  MatMap(out.data(), c, hw) = ConstMatMap(x.value().data(), hw, c).transpose();
  return make_result(std::move(out), {x}, [c, hw](Node& self) {
    MatMap(pgrad(self, 0).data(), hw, c) += ConstMatMap(self.grad.data(), c, hw).transpose();
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractViolation("concat_rows: no inputs");
  const int d = parts[0].dim(1);
  int rows = 0;
  for (const auto& p : parts) {
    if (p.value().rank() != 2 || p.dim(1) != d) throw ConfigError("concat_rows: column count mismatch");
    rows += p.dim(0);
  }
  Tensor out({rows, d});
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().storage().begin(), p.value().storage().end(), out.storage().begin() + static_cast<std::ptrdiff_t>(off));
    off += p.value().size();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return make_result(std::move(out), ps, [](Node& self) {
    std::size_t off = 0;
    for (std::size_t p = 0; p < self.parents.size(); ++p) {
      const std::size_t n = self.parents[p]->value.size();
      if (pneeds(self, p)) {
        Tensor& g = pgrad(self, p);
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[off + i];
      }
      off += n;
    }
  });
}

Var segment_mean_rows(const Var& x, int group) {
  if (x.value().rank() != 2 || group < 1 || x.dim(0) % group) throw ContractViolation("segment_mean_rows: bad grouping");
  const int n = x.dim(0) / group, d = x.dim(1);
  Tensor out({n, d});
  for (int s = 0; s < n; ++s)
    for (int r = 0; r < group; ++r)
      for (int j = 0; j < d; ++j) out.at(s, j) += x.value().at(s * group + r, j);
  for (double& v : out.values()) v /= group;
  return make_result(std::move(out), {x}, [n, d, group](Node& self) {
    Tensor& g = pgrad(self, 0);
    for (int s = 0; s < n; ++s)
      for (int r = 0; r < group; ++r)
        for (int j = 0; j < d; ++j) g.at(s * group + r, j) += self.grad.at(s, j) / group;
  });
}

// ---- linear algebra --------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  if (a.value().rank() != 2 || b.value().rank() != 2 || a.dim(1) != b.dim(0))
    throw ConfigError("matmul: incompatible shapes " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  const int n = a.dim(0), k = a.dim(1), m = b.dim(1);
  Tensor out({n, m});
  MatMap(out.data(), n, m).noalias() = ConstMatMap(a.value().data(), n, k) * ConstMatMap(b.value().data(), k, m);
  return make_result(std::move(out), {a, b}, [n, k, m](Node& self) {
    ConstMatMap g(self.grad.data(), n, m);
    if (pneeds(self, 0))
      MatMap(pgrad(self, 0).data(), n, k).noalias() += g * ConstMatMap(pvalue(self, 1).data(), k, m).transpose();
    if (pneeds(self, 1))
      MatMap(pgrad(self, 1).data(), k, m).noalias() += ConstMatMap(pvalue(self, 0).data(), n, k).transpose() * g;
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  if (x.value().rank() != 2 || weight.value().rank() != 2 || x.dim(1) != weight.dim(1))
    throw ConfigError("linear: input width " + shape_string(x.shape()) + " does not match weight " +
                      shape_string(weight.shape()));
  const int n = x.dim(0), in = x.dim(1), out_dim = weight.dim(0);
  const bool has_bias = bias.defined();
  if (has_bias && static_cast<int>(bias.value().size()) != out_dim) throw ConfigError("linear: bias size mismatch");
  Tensor out({n, out_dim});
  MatMap o(out.data(), n, out_dim);
  o.noalias() = ConstMatMap(x.value().data(), n, in) * ConstMatMap(weight.value().data(), out_dim, in).transpose();
  if (has_bias)
    o.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.value().data(), out_dim);
  std::vector<Var> parents{x, weight};
  if (has_bias) parents.push_back(bias);
  return make_result(std::move(out), parents, [n, in, out_dim, has_bias](Node& self) {
    ConstMatMap g(self.grad.data(), n, out_dim);
    if (pneeds(self, 0))
      MatMap(pgrad(self, 0).data(), n, in).noalias() += g * ConstMatMap(pvalue(self, 1).data(), out_dim, in);
    if (pneeds(self, 1))
      MatMap(pgrad(self, 1).data(), out_dim, in).noalias() += g.transpose() * ConstMatMap(pvalue(self, 0).data(), n, in);
    if (has_bias && pneeds(self, 2))
      Eigen::Map<Eigen::RowVectorXd>(pgrad(self, 2).data(), out_dim) += g.colwise().sum();
  });
}

Var softmax_rows(const Var& x) {
  if (x.value().rank() != 2) throw ContractViolation("softmax_rows: expected a matrix");
  const int n = x.dim(0), m = x.dim(1);
  Tensor out = x.value();
  for (int r = 0; r < n; ++r) {
    double* row = &out.at(r, 0);
    const double mx = *std::max_element(row, row + m);
    double s = 0.0;
    for (int j = 0; j < m; ++j) s += (row[j] = std::exp(row[j] - mx));
    for (int j = 0; j < m; ++j) row[j] /= s;
  }
  return make_result(std::move(out), {x}, [n, m](Node& self) {
    Tensor& g = pgrad(self, 0);
    for (int r = 0; r < n; ++r) {
      double dot = 0.0;
      for (int j = 0; j < m; ++j) dot += self.grad.at(r, j) * self.value.at(r, j);
      for (int j = 0; j < m; ++j) g.at(r, j) += self.value.at(r, j) * (self.grad.at(r, j) - dot);
    }
  });
}

Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps) {
  if (x.value().rank() != 2) throw ContractViolation("layer_norm_rows: expected a matrix");
  const int n = x.dim(0), d = x.dim(1);
  if (static_cast<int>(gamma.value().size()) != d || static_cast<int>(beta.value().size()) != d)
    throw ConfigError("layer_norm_rows: affine parameter size mismatch");
  Tensor out({n, d});
  auto xhat = std::make_shared<Tensor>(Shape{n, d});
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n));
  for (int r = 0; r < n; ++r) {
    double mu = 0.0;
    for (int j = 0; j < d; ++j) mu += x.value().at(r, j);
    mu /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      const double c = x.value().at(r, j) - mu;
      var += c * c;
    }
    var /= d;
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[static_cast<std::size_t>(r)] = is;
    for (int j = 0; j < d; ++j) {
      const double h = (x.value().at(r, j) - mu) * is;
      xhat->at(r, j) = h;
      out.at(r, j) = h * gamma.value()[static_cast<std::size_t>(j)] + beta.value()[static_cast<std::size_t>(j)];
    }
  }
  return make_result(std::move(out), {x, gamma, beta}, [n, d, xhat, inv_std](Node& self) {
    const Tensor& gam = pvalue(self, 1);
    if (pneeds(self, 1) || pneeds(self, 2)) {
      for (int r = 0; r < n; ++r)
        for (int j = 0; j < d; ++j) {
          const double g = self.grad.at(r, j);
          if (pneeds(self, 1)) pgrad(self, 1)[static_cast<std::size_t>(j)] += g * xhat->at(r, j);
          if (pneeds(self, 2)) pgrad(self, 2)[static_cast<std::size_t>(j)] += g;
        }
    }
    if (pneeds(self, 0)) {
      Tensor& gx = pgrad(self, 0);
      std::vector<double> gh(static_cast<std::size_t>(d));
      for (int r = 0; r < n; ++r) {
        double s1 = 0.0, s2 = 0.0;
        for (int j = 0; j < d; ++j) {
          gh[static_cast<std::size_t>(j)] = self.grad.at(r, j) * gam[static_cast<std::size_t>(j)];
          s1 += gh[static_cast<std::size_t>(j)];
          s2 += gh[static_cast<std::size_t>(j)] * xhat->at(r, j);
        }
        const double is = (*inv_std)[static_cast<std::size_t>(r)];
        for (int j = 0; j < d; ++j)
          gx.at(r, j) += is * (gh[static_cast<std::size_t>(j)] - s1 / d - xhat->at(r, j) * s2 / d);
      }
    }
  });
}

Var gather_rows(const Var& table, std::span<const int> index) {
  if (table.value().rank() != 2) throw ContractViolation("gather_rows: expected a matrix");
  const int k = table.dim(0), d = table.dim(1);
  const int n = static_cast<int>(index.size());
  Tensor out({n, d});
  for (int i = 0; i < n; ++i) {
    const int r = index[static_cast<std::size_t>(i)];
    if (r < 0 || r >= k) throw ContractViolation("gather_rows: index out of range");
    std::copy_n(table.value().row(r), d, out.row(i));
  }
  std::vector<int> idx(index.begin(), index.end());
  return make_result(std::move(out), {table}, [idx = std::move(idx), d](Node& self) {
    Tensor& g = pgrad(self, 0);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (int j = 0; j < d; ++j) g.at(idx[i], j) += self.grad.at(static_cast<int>(i), j);
  });
}

// ---- losses ----------------------------------------------------------------

Var cross_entropy_rows(const Var& logits, std::span<const int> targets) {
  if (logits.value().rank() != 2 || static_cast<std::size_t>(logits.dim(0)) != targets.size())
    throw ContractViolation("cross_entropy_rows: target count mismatch");
  const int n = logits.dim(0), k = logits.dim(1);
  auto probs = std::make_shared<Tensor>(Shape{n, k});
  double loss = 0.0;
  for (int r = 0; r < n; ++r) {
    const double* row = logits.value().row(r);
    const double mx = *std::max_element(row, row + k);
    double s = 0.0;
    for (int j = 0; j < k; ++j) s += std::exp(row[j] - mx);
    const int t = targets[static_cast<std::size_t>(r)];
    if (t < 0 || t >= k) throw ContractViolation("cross_entropy_rows: target out of range");
    loss += -(row[t] - mx - std::log(s));
    for (int j = 0; j < k; ++j) probs->at(r, j) = std::exp(row[j] - mx) / s;
  }
  std::vector<int> tg(targets.begin(), targets.end());
  return make_result(Tensor({1}, loss / n), {logits}, [probs, tg = std::move(tg), n, k](Node& self) {
    Tensor& g = pgrad(self, 0);
    const double s = self.grad[0] / n;
    for (int r = 0; r < n; ++r)
      for (int j = 0; j < k; ++j)
        g.at(r, j) += s * (probs->at(r, j) - (j == tg[static_cast<std::size_t>(r)] ? 1.0 : 0.0));
  });
}

Var cross_entropy_pixels(const Var& logits, std::span<const int> targets) {
  if (logits.value().rank() != 3) throw ContractViolation("cross_entropy_pixels: expected K×H×W");
  const int hw = logits.dim(1) * logits.dim(2);
  if (static_cast<int>(targets.size()) != hw) throw ContractViolation("cross_entropy_pixels: target size mismatch");
  return cross_entropy_rows(chw_to_tokens(logits), targets);
}

}  // namespace hrvvs
