#include "hrvvs/model.hpp"

#include <algorithm>

#include "hrvvs/errors.hpp"
#include "hrvvs/optim.hpp"

namespace hrvvs {

namespace {

int memory_token_channels(const ModelConfig& c) {
  int ch = 0;
  for (int s : c.memory.token_stages) ch = std::max(ch, c.encoder.channels[static_cast<std::size_t>(s - 1)]);
  return ch;
}

}  // namespace

void validate(const ModelConfig& config) {
  encoder::validate(config.encoder);
  toyvar::validate(config.toyvar);
  memory::validate(config.memory);
  msim::validate(config.msim, config.encoder.channels.back());
  dwfm::validate(config.dwfm);
}

void round_params_to_float32(ParamStore& store) {
  for (const auto& [name, p] : store.all()) {
    Var handle = p;
    round_to_float32(handle.mutable_value());
  }
}

HrvvsModel::HrvvsModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  validate(config_);
  Rng rng(seed);
  var_ = std::make_unique<toyvar::ToyVar>(store_, config_.toyvar, config_.encoder.channels, rng);
  encoder_ = std::make_unique<encoder::Encoder>(store_, config_.encoder, rng);
  const int c5 = config_.encoder.channels.back();
  msim_ = std::make_unique<msim::Msim>(store_, c5, memory_token_channels(config_) + config_.memory.position_dims,
                                       config_.msim, rng);
  dwfm_ = std::make_unique<dwfm::Dwfm>(store_, config_.encoder.channels.front(), config_.dwfm, rng);
  decoder_ = std::make_unique<decoder::Decoder>(store_, config_.encoder.channels, decoder::kClasses, rng);
  round_params_to_float32(store_);
  apply_default_trainability();
}

void HrvvsModel::apply_default_trainability() {
  store_.set_trainable("", true);
  store_.set_trainable("toyvar.backbone.", false);
}

StreamState HrvvsModel::new_stream() const {
  return StreamState{memory::MemoryBank(config_.memory, memory_token_channels(config_)), {}, 0};
}

encoder::PriorSet HrvvsModel::priors(const views::ViewSet& views) const {
  encoder::PriorSet out;
  if (!config_.flags.use_var) return out;
  const auto sizes = encoder::Encoder::stage_sizes(views.global_view.dim(1), views.global_view.dim(2));
  for (int m = 0; m < encoder::kViews; ++m) out.push_back(var_->extract_priors(views.view(m), sizes));
  return out;
}

FrameOutput HrvvsModel::step(const Tensor& frame, StreamState& state, const ForwardContext& ctx) const {
  views::validate_frame(frame);
  if (frame.dim(0) != config_.encoder.in_channels) throw InputError("model: frame channel count mismatch");
  const views::ViewSet views = views::decompose(frame);
  FrameOutput out;
  out.pyramid = encoder_->encode_views(views, priors(views));

  std::array<Var, views::kLocalViews> locals;
  for (int m = 0; m < views::kLocalViews; ++m)
    locals[static_cast<std::size_t>(m)] = out.pyramid.at(m, encoder::kStages - 1);
  const Var& global = out.pyramid.global().back();
  if (config_.flags.use_msim) {
    // History is read before the current frame joins the bank.
    out.msim = (*msim_)(global, locals, state.memory.tokens(), ctx);
  } else {
    out.msim = {global, global, locals};
  }
  encoder::store_current_global(out.pyramid, state.memory, state.frame);

  const decoder::DecoderPyramid decoded = decoder_->decode(out.pyramid, out.msim);
  const Var& p_t = decoded.penultimate_global();
  if (config_.flags.use_dwfm) {
    const auto pen_locals = decoded.penultimate_locals();
    out.fusion_weights = dwfm_->fuse(pen_locals, p_t, state.memory.previous_global(), state.weights);
  } else {
    out.fusion_weights = Var::constant(Tensor({views::kLocalViews, views::kPatchesPerLocal}, 1.0));
    state.weights.last_final = out.fusion_weights.value();
    ++state.weights.frame;
  }
  out.penultimate_global = p_t.value();
  state.memory.store_decoder_global(out.penultimate_global);
  out.logits = decoder_->predict(decoded, out.fusion_weights, frame.dim(1), frame.dim(2));
  ++state.frame;
  return out;
}

}  // namespace hrvvs
