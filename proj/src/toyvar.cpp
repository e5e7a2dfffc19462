#include "hrvvs/toyvar.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <tuple>

#include "hrvvs/errors.hpp"
#include "hrvvs/optim.hpp"

namespace hrvvs::toyvar {

void validate(const ToyVarConfig& c) {
  if (c.codebook_size < 2) throw ConfigError("toyvar: codebook needs at least two entries");
  if (c.code_dim < 1 || c.model_dim < 2 || c.decoder_channels < 1 || c.adapter_bottleneck < 1)
    throw ConfigError("toyvar: widths must be positive");
  for (int k = 1; k < kScales; ++k)
    if (c.scales[static_cast<std::size_t>(k)] <= c.scales[static_cast<std::size_t>(k - 1)])
      throw ConfigError("toyvar: scale schedule must be strictly increasing");
  const int top = c.scales.back();
  for (int s : c.scales)
    if (s < 1 || top % s) throw ConfigError("toyvar: every scale must divide the finest scale");
  if (c.input_size % top) throw ConfigError("toyvar: input size must be a multiple of the finest scale");
  if (c.model_dim % c.heads) throw ConfigError("toyvar: heads must divide model width");
}

namespace {

constexpr const char* kBackbone = "toyvar.backbone.";

/// Fixed 2-D sinusoidal position table for an s×s grid measured in
/// finest-scale latent units, so that all scales share one coordinate frame.
Tensor grid_positions(int side, int latent_side, int dim) {
  Tensor t({side * side, dim});
  const double cell = static_cast<double>(latent_side) / side;
  const int half = dim / 2;
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      double* row = t.row(y * side + x);
      sinusoid((y + 0.5) * cell, half, row, 64.0);
      sinusoid((x + 0.5) * cell, dim - half, row + half, 64.0);
    }
  return t;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.dim(0)));
  for (int r = 0; r < logits.dim(0); ++r) {
    const double* row = logits.row(r);
    out[static_cast<std::size_t>(r)] = static_cast<int>(std::max_element(row, row + logits.dim(1)) - row);
  }
  return out;
}

}  // namespace

ToyVar::ToyVar(ParamStore& store, const ToyVarConfig& config, const std::array<int, kScales>& stage_channels, Rng& rng)
    : config_(config) {
  validate(config_);
  const std::string b = kBackbone;
  patch_ = config_.input_size / latent_side();
  const int d = config_.code_dim, dm = config_.model_dim, k = config_.codebook_size;
  enc_patch_ = Conv2d(store, b + "enc.patch", 3, d, patch_, patch_, rng);
  enc_patch_.pad = 0;
  enc_mix_ = Conv2d(store, b + "enc.mix", d, d, 1, 1, rng, Init::Xavier);
  Tensor codes({k - 1, d});
  for (double& v : codes.values()) v = rng.normal() * 0.5;
  codebook_ = store.create(b + "codebook", std::move(codes));
  dec_trunk_ = Conv2d(store, b + "dec.trunk", d, config_.decoder_channels, 3, 1, rng);
  dec_out_ = Conv2d(store, b + "dec.out", config_.decoder_channels, 3, 1, 1, rng, Init::Xavier);

  Tensor start({1, dm});
  for (double& v : start.values()) v = rng.normal() * 0.1;
  start_ = store.create(b + "T.start", std::move(start));
  Tensor se({kScales, dm});
  for (double& v : se.values()) v = rng.normal() * 0.1;
  scale_embed_ = store.create(b + "T.scale_embed", std::move(se));
  in_proj_ = Linear(store, b + "T.in", d, dm, rng);
  attn_ = CrossAttention(store, b + "T.attn",
                         {.query_dim = dm, .key_dim = dm, .model_dim = dm, .heads = config_.heads, .zero_init_output = false},
                         rng);
  ln_mlp_ = LayerNorm(store, b + "T.ln_mlp", dm);
  mlp_in_ = Linear(store, b + "T.mlp_in", dm, 2 * dm, rng, Init::He);
  mlp_out_ = Linear(store, b + "T.mlp_out", 2 * dm, dm, rng);
  ln_head_ = LayerNorm(store, b + "T.ln_head", dm);
  head_ = Linear(store, b + "T.head", dm, k, rng);

  adapter_down_ = Linear(store, "toyvar.adapter.down", dm, config_.adapter_bottleneck, rng, Init::He);
  adapter_up_ = Linear(store, "toyvar.adapter.up", config_.adapter_bottleneck, dm, rng, Init::Zero);
  for (int i = 0; i < kScales; ++i)
    prior_proj_[static_cast<std::size_t>(i)] =
        Conv2d(store, "toyvar.prior_proj." + std::to_string(i + 1), config_.decoder_channels,
               stage_channels[static_cast<std::size_t>(i)], 1, 1, rng, Init::Zero);
}

Tensor ToyVar::prepare(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(0) != 3) throw InputError("toyvar: expected a 3×H×W image, got " + shape_string(image.shape()));
  if (image.dim(1) % latent_side() || image.dim(2) % latent_side())
    throw InputError("toyvar: image sides must be divisible by " + std::to_string(latent_side()));
  if (image.dim(1) == config_.input_size && image.dim(2) == config_.input_size) return image;
  return resize_bilinear(image, config_.input_size, config_.input_size);
}

Var ToyVar::codebook_table() const {
  const std::vector<Var> parts{Var::constant(Tensor({1, config_.code_dim}, 0.0)), codebook_};
  return concat_rows(parts);
}

Var ToyVar::latent(const Tensor& image) const { return enc_mix_(relu(enc_patch_(Var::constant(prepare(image))))); }

TokenPyramid ToyVar::vq_encode(const Tensor& image) const { return quantize(latent(image).value()); }

TokenPyramid ToyVar::quantize(const Tensor& latent) const {
  const int d = config_.code_dim, top = latent_side();
  if (latent.shape() != Shape{d, top, top}) throw ContractViolation("quantize: latent shape mismatch");
  const Tensor table = codebook_table().value();
  const int k = table.dim(0);
  Tensor fhat({d, top, top});
  TokenPyramid tokens;
  for (int side : config_.scales) {
    Tensor rest = latent;
    for (std::size_t i = 0; i < rest.size(); ++i) rest[i] -= fhat[i];
    const Tensor z = avg_pool(rest, top / side);
    TokenMap map{side, std::vector<int>(static_cast<std::size_t>(side) * side)};
    for (int p = 0; p < side * side; ++p) {
      double best = std::numeric_limits<double>::infinity();
      int arg = 0;
      for (int c = 0; c < k; ++c) {
        double dist = 0.0;
        for (int j = 0; j < d; ++j) {
          const double diff = z[static_cast<std::size_t>(j) * side * side + p] - table.at(c, j);
          dist += diff * diff;
        }
        if (dist < best) {
          best = dist;
          arg = c;
        }
      }
      map.indices[static_cast<std::size_t>(p)] = arg;
    }
    const int f = top / side;
    for (int j = 0; j < d; ++j)
      for (int y = 0; y < top; ++y)
        for (int x = 0; x < top; ++x)
          fhat.at(j, y, x) += table.at(map.indices[static_cast<std::size_t>((y / f) * side + x / f)], j);
    tokens.push_back(std::move(map));
  }
  return tokens;
}

Tensor ToyVar::dequantize(const TokenPyramid& tokens, int scales) const {
  const int d = config_.code_dim, top = latent_side();
  if (scales < 0 || scales > static_cast<int>(tokens.size())) throw ContractViolation("dequantize: scale count out of range");
  const Tensor table = codebook_table().value();
  Tensor fhat({d, top, top});
  for (int k = 0; k < scales; ++k) {
    const TokenMap& map = tokens[static_cast<std::size_t>(k)];
    if (map.side != config_.scales[static_cast<std::size_t>(k)] ||
        map.indices.size() != static_cast<std::size_t>(map.side) * map.side)
      throw ContractViolation("dequantize: token map does not match the scale schedule");
    const int f = top / map.side;
    for (int idx : map.indices)
      if (idx < 0 || idx >= table.dim(0)) throw ContractViolation("dequantize: token index out of range");
    for (int j = 0; j < d; ++j)
      for (int y = 0; y < top; ++y)
        for (int x = 0; x < top; ++x)
          fhat.at(j, y, x) += table.at(map.indices[static_cast<std::size_t>((y / f) * map.side + x / f)], j);
  }
  return fhat;
}

Var ToyVar::decoder_trunk(const Var& latent_map) const {
  const Var h = relu(dec_trunk_(latent_map));
  return resize_bilinear(h, 2 * h.dim(1), 2 * h.dim(2));
}

Var ToyVar::decode_image(const Var& latent_map) const {
  return resize_bilinear(dec_out_(decoder_trunk(latent_map)), config_.input_size, config_.input_size);
}

Decoded ToyVar::vq_decode(const TokenPyramid& tokens) const {
  if (tokens.size() != kScales) throw ContractViolation("vq_decode: expected five token maps");
  Decoded out;
  for (int k = 1; k <= kScales; ++k) {
    const int side = config_.scales[static_cast<std::size_t>(k - 1)];
    const Tensor cum = avg_pool(dequantize(tokens, k), latent_side() / side);
    out.features.push_back(decoder_trunk(Var::constant(cum)).value());
  }
  out.reconstruction = reconstruct(tokens, kScales);
  return out;
}

Tensor ToyVar::reconstruct(const TokenPyramid& tokens, int scales) const {
  return decode_image(Var::constant(dequantize(tokens, scales))).value();
}

std::vector<double> ToyVar::cumulative_latent_errors(const Tensor& image) const {
  const Tensor f = latent(image).value();
  const TokenPyramid tokens = quantize(f);
  std::vector<double> errs;
  for (int k = 0; k <= kScales; ++k) {
    const Tensor fhat = dequantize(tokens, k);
    double e = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) e += (f[i] - fhat[i]) * (f[i] - fhat[i]);
    errs.push_back(e);
  }
  return errs;
}

std::vector<Var> ToyVar::scale_inputs(const TokenPyramid& tokens, int k) const {
  const int dm = config_.model_dim, top = latent_side();
  std::vector<Var> inputs;
  for (int j = 1; j <= k; ++j) {
    const int side = config_.scales[static_cast<std::size_t>(j - 1)];
    Var x;
    if (j == 1) {
      x = start_;
    } else {
      const Tensor prev = avg_pool(dequantize(tokens, j - 1), top / side);
      x = in_proj_(chw_to_tokens(Var::constant(prev)));
    }
    const std::vector<int> which(static_cast<std::size_t>(side) * side, j - 1);
    x = add(x, gather_rows(scale_embed_, which));
    x = add(x, Var::constant(grid_positions(side, top, dm)));
    inputs.push_back(x);
  }
  return inputs;
}

Var ToyVar::transformer(const Var& queries, const Var& context) const {
  Var x = add(queries, attn_(queries, context, context));
  return add(x, mlp_out_(relu(mlp_in_(ln_mlp_(x)))));
}

Var ToyVar::adapter(const Var& hidden) const { return add(hidden, adapter_up_(relu(adapter_down_(hidden)))); }

Var ToyVar::predict_next_scale(int k, const TokenPyramid& context, bool with_adapter) const {
  if (k < 1 || k > kScales) throw ContractViolation("predict_next_scale: scale index outside the schedule");
  if (static_cast<int>(context.size()) < k - 1) throw ContractViolation("predict_next_scale: missing context scales");
  const std::vector<Var> inputs = scale_inputs(context, k);
  const Var ctx = concat_rows(inputs);
  Var h = transformer(inputs.back(), ctx);
  if (with_adapter) h = adapter(h);
  return head_(ln_head_(h));
}

std::vector<Var> ToyVar::all_scale_logits(const TokenPyramid& tokens, bool with_adapter) const {
  if (tokens.size() < kScales - 1) throw ContractViolation("all_scale_logits: missing token maps");
  const std::vector<Var> inputs = scale_inputs(tokens, kScales);
  std::vector<Var> out;
  for (int k = 1; k <= kScales; ++k) {
    const Var ctx = concat_rows(std::span<const Var>(inputs.data(), static_cast<std::size_t>(k)));
    Var h = transformer(inputs[static_cast<std::size_t>(k - 1)], ctx);
    if (with_adapter) h = adapter(h);
    out.push_back(head_(ln_head_(h)));
  }
  return out;
}

TokenPyramid ToyVar::generate() const {
  TokenPyramid tokens;
  for (int k = 1; k <= kScales; ++k) {
    const Var logits = predict_next_scale(k, tokens);
    tokens.push_back({config_.scales[static_cast<std::size_t>(k - 1)], argmax_rows(logits.value())});
  }
  return tokens;
}

std::vector<Var> ToyVar::extract_priors(const Tensor& view, const std::vector<std::pair<int, int>>& stage_sizes) const {
  if (stage_sizes.size() != kScales) throw ConfigError("extract_priors: expected five stage sizes");
  const TokenPyramid tokens = vq_encode(view);
  const std::vector<Var> logits = all_scale_logits(tokens);
  const Var table = codebook_table();
  std::vector<Var> priors(kScales);
  for (int k = 1; k <= kScales; ++k) {
    const int side = config_.scales[static_cast<std::size_t>(k - 1)];
    const Tensor prev = avg_pool(dequantize(tokens, k - 1), latent_side() / side);
    const Var predicted = tokens_to_chw(matmul(softmax_rows(logits[static_cast<std::size_t>(k - 1)]), table), side, side);
    const Var features = decoder_trunk(add(Var::constant(prev), predicted));
    const std::size_t stage = static_cast<std::size_t>(kScales - k);
    const auto [h, w] = stage_sizes[stage];
    const Conv2d& proj = prior_proj_[stage];
    if (proj.weight.dim(1) != features.dim(0)) throw ConfigError("extract_priors: projection width mismatch");
    priors[stage] = proj(resize_bilinear(features, h, w));
  }
  return priors;
}

PretrainLosses ToyVar::pretrain_losses(const Tensor& image) const {
  const Tensor img = prepare(image);
  const Var f = latent(img);
  const TokenPyramid tokens = quantize(f.value());
  const Var table = codebook_table();
  const int top = latent_side();
  Var fhat;
  for (const TokenMap& map : tokens) {
    const Var codes = tokens_to_chw(gather_rows(table, map.indices), map.side, map.side);
    const Var up = upsample_nearest(codes, top / map.side);
    fhat = fhat.defined() ? add(fhat, up) : up;
  }
  PretrainLosses out;
  out.commitment = add(mse(fhat, detach(f)), mse(f, detach(fhat)));
  const Var ste = add(f, detach(sub(fhat, f)));
  out.reconstruction = mse(decode_image(ste), Var::constant(img));
  const std::vector<Var> logits = all_scale_logits(tokens, false);
  std::vector<int> targets;
  for (const TokenMap& map : tokens) targets.insert(targets.end(), map.indices.begin(), map.indices.end());
  out.next_scale = cross_entropy_rows(concat_rows(logits), targets);
  return out;
}

std::pair<double, double> corpus_losses(const ToyVar& model, const std::vector<Tensor>& corpus) {
  if (corpus.empty()) throw ContractViolation("corpus_losses: empty corpus");
  double rec = 0.0, ce = 0.0;
  for (const Tensor& img : corpus) {
    const PretrainLosses l = model.pretrain_losses(img);
    rec += l.reconstruction.value()[0];
    ce += l.next_scale.value()[0];
  }
  return {rec / static_cast<double>(corpus.size()), ce / static_cast<double>(corpus.size())};
}

PretrainReport pretrain(ToyVar& model, ParamStore& store, const std::vector<Tensor>& corpus,
                        const PretrainOptions& options, Rng& rng) {
  if (corpus.empty()) throw ContractViolation("pretrain: empty corpus");
  // Only the backbone learns here; remember and restore the other flags.
  std::map<std::string, bool> saved;
  for (const auto& [name, p] : store.all()) saved[name] = p.requires_grad();
  store.set_trainable("", false);
  store.set_trainable(kBackbone, true);

  PretrainReport report;
  std::tie(report.initial_reconstruction, report.initial_next_scale) = corpus_losses(model, corpus);
  Adam adam;
  const int batch = std::max(1, options.batch);
  for (int step = 0; step < options.steps; ++step) {
    double total = 0.0;
    for (int b = 0; b < batch; ++b) {
      const Tensor& img = corpus[static_cast<std::size_t>(rng.below(corpus.size()))];
      const PretrainLosses l = model.pretrain_losses(img);
      const Var loss = scale(add(add(l.reconstruction, l.commitment), l.next_scale), 1.0 / batch);
      total += loss.value()[0];
      if (!std::isfinite(loss.value()[0]))
        throw TrainingFailure("toyvar pretraining diverged at step " + std::to_string(step));
      backward(loss);
    }
    adam.step(store, options.learning_rate);
    report.step_losses.push_back(total);
  }
  std::tie(report.final_reconstruction, report.final_next_scale) = corpus_losses(model, corpus);

  for (const auto& [name, p] : store.all()) {
    Var handle = p;
    handle.set_requires_grad(saved[name]);
  }
  store.zero_grad();
  return report;
}

}  // namespace hrvvs::toyvar
