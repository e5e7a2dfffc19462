#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "hrvvs/rng.hpp"
#include "hrvvs/tensor.hpp"

namespace hrvvs {

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor& grad_buffer();
};

/// Handle to a node of the reverse-mode tape. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  static Var constant(Tensor value) { return Var(std::move(value), false); }

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  int dim(int i) const { return node_->value.dim(i); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool r) { node_->requires_grad = r; }

  /// Accumulated gradient; zero tensor of matching shape if none has arrived.
  Tensor grad() const;
  void zero_grad() { node_->grad = Tensor(); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;

  friend Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn);
};

/// Creates an op result. The backward closure receives the result node and
/// must accumulate into `self.parents[i]->grad_buffer()` for parents that
/// require grad.
Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn);

/// Seeds d(root)/d(root) = 1 (root must hold one element) and propagates.
void backward(const Var& root);

Var detach(const Var& x);

// ---- elementwise -----------------------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
/// a * s where s is a one-element Var.
Var scale_by(const Var& a, const Var& s);
Var relu(const Var& x);
Var sigmoid(const Var& x);
Var square(const Var& x);
Var reciprocal(const Var& x);

// ---- reductions ------------------------------------------------------------
Var sum(const Var& x);
Var mean(const Var& x);
Var mse(const Var& a, const Var& b);
/// One-element Var holding x[index].
Var element(const Var& x, int index);

// ---- shape -----------------------------------------------------------------
Var reshape(const Var& x, Shape shape);
Var transpose(const Var& x);
/// C×H×W -> (H·W)×C, row-major over space.
Var chw_to_tokens(const Var& x);
/// (H·W)×C -> C×H×W.
Var tokens_to_chw(const Var& x, int h, int w);
Var concat_rows(std::span<const Var> parts);
Var crop(const Var& x, int y0, int x0, int h, int w);
/// Tiles laid out row-major in a rows×cols grid, all C×h×w.
Var assemble_grid(std::span<const Var> tiles, int rows, int cols);
/// Channel c of a C×H×W tensor as 1×H×W.
Var select_channel(const Var& x, int c);
/// Mean over consecutive groups of `group` rows: (n·group)×D -> n×D.
Var segment_mean_rows(const Var& x, int group);

// ---- linear algebra --------------------------------------------------------
Var matmul(const Var& a, const Var& b);
/// x: N×in, weight: out×in, bias: out (may be undefined) -> N×out.
Var linear(const Var& x, const Var& weight, const Var& bias);
Var softmax_rows(const Var& x);
Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
/// Rows of `table` selected by `index`: -> index.size()×D.
Var gather_rows(const Var& table, std::span<const int> index);

// ---- spatial ---------------------------------------------------------------
/// x: C×H×W, weight: O×C×k×k, bias: O (may be undefined).
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);
Var resize_bilinear(const Var& x, int out_h, int out_w);
Var upsample_nearest(const Var& x, int factor);
Var avg_pool(const Var& x, int factor);
/// Average pooling into out_h×out_w bins (bins may overlap when sizes do not divide).
Var adaptive_avg_pool(const Var& x, int out_h, int out_w);
/// Channel-wise softmax over a K×H×W tensor.
Var softmax_channels(const Var& x);
/// out = map·a + (1 − map)·b, map is H×W broadcast across channels.
Var blend(const Var& a, const Var& b, const Var& map);

// ---- attention -------------------------------------------------------------
/// Scaled dot-product attention over `heads` equal column groups.
/// q: Nq×D, k: Nk×D, v: Nk×D -> Nq×D. When `probs_out` is non-null the
/// attention probabilities (heads×Nq×Nk) are copied into it.
Var attention(const Var& q, const Var& k, const Var& v, int heads, Tensor* probs_out = nullptr);
/// Inverted dropout; identity when !training or p == 0.
Var dropout(const Var& x, double p, bool training, Rng* rng);

// ---- losses ----------------------------------------------------------------
/// Mean cross entropy of row-wise logits (N×K) against class targets.
Var cross_entropy_rows(const Var& logits, std::span<const int> targets);
/// Mean per-pixel cross entropy of K×H×W logits against H×W targets.
Var cross_entropy_pixels(const Var& logits, std::span<const int> targets);

}  // namespace hrvvs
