#include "hrvvs/msim.hpp"

#include <algorithm>
#include <vector>

#include "hrvvs/errors.hpp"

namespace hrvvs::msim {

void validate(const MsimConfig& config, int channels) {
  if (config.heads < 1 || channels % config.heads) throw ConfigError("msim: heads must divide the channel count");
  if (config.dropout < 0.0 || config.dropout >= 1.0) throw ConfigError("msim: dropout must lie in [0, 1)");
}

namespace {

constexpr std::array<int, 3> kPoolFactors{1, 2, 4};

void encode_position(double view, double row, double col, int dims, double* out) {
  const int vd = dims / 4, rd = (dims - vd) / 2, cd = dims - vd - rd;
  sinusoid(view, vd, out, 16.0);
  sinusoid(row, rd, out + vd, 64.0);
  sinusoid(col, cd, out + vd + rd, 64.0);
}

/// Row/col encodings of an h×w grid (no view component).
Tensor grid_positions(int h, int w, int dims) {
  Tensor t({h * w, dims});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double* row = t.row(y * w + x);
      const int rd = dims / 2;
      sinusoid(y + 0.5, rd, row, 64.0);
      sinusoid(x + 0.5, dims - rd, row + rd, 64.0);
    }
  return t;
}

}  // namespace

Msim::Msim(ParamStore& store, int channels, int memory_token_dim, const MsimConfig& config, Rng& rng)
    : config_(config), channels_(channels) {
  validate(config_, channels);
  using O = CrossAttention::Options;
  history_ = CrossAttention(store, "msim.history",
                            O{.query_dim = channels, .key_dim = memory_token_dim, .model_dim = channels, .heads = config_.heads},
                            rng);
  from_locals_ = CrossAttention(store, "msim.from_locals",
                                O{.query_dim = channels, .key_dim = channels, .model_dim = channels, .heads = config_.heads},
                                rng);
  to_locals_ = CrossAttention(store, "msim.to_locals",
                              O{.query_dim = channels, .key_dim = channels, .model_dim = channels, .heads = config_.heads},
                              rng);
}

Var Msim::residual(const Var& base_tokens, const Var& update, const ForwardContext& ctx) const {
  return add(base_tokens, dropout(update, config_.dropout, ctx.training, ctx.rng));
}

Var Msim::update_global_with_history(const Var& global, const Tensor& history, const ForwardContext& ctx,
                                     Tensor* probs) const {
  if (global.shape().size() != 3 || global.dim(0) != channels_) throw ConfigError("msim: global feature width mismatch");
  if (history.rank() != 2 || history.dim(0) == 0) return global;
  const Var q = chw_to_tokens(global);
  const Var h = Var::constant(history);
  return tokens_to_chw(residual(q, history_(q, h, h, probs), ctx), global.dim(1), global.dim(2));
}

Var Msim::pooled_local_tokens(std::span<const Var> locals) const {
  if (locals.size() != views::kLocalViews) throw ConfigError("msim: expected four local views");
  std::vector<Var> parts;
  for (std::size_t m = 0; m < locals.size(); ++m) {
    const Var& l = locals[m];
    if (l.shape() != locals[0].shape() || l.dim(0) != channels_) throw ConfigError("msim: local feature shape mismatch");
    const int h = l.dim(1), w = l.dim(2);
    for (int f : kPoolFactors) {
      const int ph = std::max(1, h / f), pw = std::max(1, w / f);
      Var tok = chw_to_tokens(adaptive_avg_pool(l, ph, pw));
      if (config_.local_positions) {
        Tensor pe({ph * pw, channels_});
        const double sy = static_cast<double>(h) / ph, sx = static_cast<double>(w) / pw;
        for (int y = 0; y < ph; ++y)
          for (int x = 0; x < pw; ++x)
            encode_position(static_cast<double>(m), (y + 0.5) * sy, (x + 0.5) * sx, channels_, pe.row(y * pw + x));
        tok = add(tok, Var::constant(std::move(pe)));
      }
      parts.push_back(tok);
    }
  }
  return concat_rows(parts);
}

Var Msim::update_global_with_locals(const Var& g_h, std::span<const Var> locals, const ForwardContext& ctx,
                                    Tensor* probs) const {
  const Var kv = pooled_local_tokens(locals);
  const Var q = chw_to_tokens(g_h);
  return tokens_to_chw(residual(q, from_locals_(q, kv, kv, probs), ctx), g_h.dim(1), g_h.dim(2));
}

std::array<Var, views::kLocalViews> Msim::update_locals(std::span<const Var> locals, const Var& g_msim,
                                                        const ForwardContext& ctx) const {
  if (locals.size() != views::kLocalViews) throw ConfigError("msim: expected four local views");
  const Var v = chw_to_tokens(g_msim);
  const Var k = add(v, Var::constant(grid_positions(g_msim.dim(1), g_msim.dim(2), channels_)));
  std::array<Var, views::kLocalViews> out;
  for (std::size_t m = 0; m < locals.size(); ++m) {
    const Var q = chw_to_tokens(locals[m]);
    out[m] = tokens_to_chw(residual(q, to_locals_(q, k, v), ctx), locals[m].dim(1), locals[m].dim(2));
  }
  return out;
}

MsimOutput Msim::operator()(const Var& global, std::span<const Var> locals, const Tensor& history,
                            const ForwardContext& ctx) const {
  MsimOutput out;
  out.g_h = update_global_with_history(global, history, ctx);
  out.g_msim = update_global_with_locals(out.g_h, locals, ctx);
  out.locals = update_locals(locals, out.g_msim, ctx);
  return out;
}

}  // namespace hrvvs::msim
