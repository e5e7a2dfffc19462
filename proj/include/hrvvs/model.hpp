#pragma once

#include <memory>
#include <vector>

#include "hrvvs/decoder.hpp"
#include "hrvvs/dwfm.hpp"
#include "hrvvs/encoder.hpp"
#include "hrvvs/memory.hpp"
#include "hrvvs/msim.hpp"
#include "hrvvs/toyvar.hpp"

namespace hrvvs {

/// Which branches run. Disabled branches keep their parameters (so every
/// variant starts from the same initialisation) but are bypassed:
/// no VAR → zero priors, no MSIM → identity, no DWFM → all-ones weights.
struct AblationFlags {
  bool use_var = true;
  bool use_msim = true;
  bool use_dwfm = true;

  bool operator==(const AblationFlags&) const = default;
};

struct ModelConfig {
  encoder::StageConfig encoder;
  toyvar::ToyVarConfig toyvar;
  memory::MemoryConfig memory;
  msim::MsimConfig msim;
  dwfm::DwfmConfig dwfm;
  AblationFlags flags;
};

void validate(const ModelConfig& config);

/// Per-video streaming state: memory bank, fusion weights, frame counter.
struct StreamState {
  memory::MemoryBank memory;
  dwfm::WeightState weights;
  int frame = 0;

  void reset() {
    memory.reset();
    weights.reset();
    frame = 0;
  }
};

struct FrameOutput {
  Var logits;         // classes × H × W
  Var fusion_weights;  // 4×16 W_final
  encoder::FeaturePyramid pyramid;
  msim::MsimOutput msim;
  Tensor penultimate_global;  // P_t handed to the next frame
};

class HrvvsModel {
 public:
  HrvvsModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const toyvar::ToyVar& var() const { return *var_; }
  toyvar::ToyVar& var() { return *var_; }
  const encoder::Encoder& encoder() const { return *encoder_; }
  const msim::Msim& msim() const { return *msim_; }
  const dwfm::Dwfm& dwfm() const { return *dwfm_; }
  const decoder::Decoder& decoder() const { return *decoder_; }

  StreamState new_stream() const;

  /// Per-view priors (empty when the VAR branch is off).
  encoder::PriorSet priors(const views::ViewSet& views) const;

  /// Processes one frame of a stream and advances the state.
  FrameOutput step(const Tensor& frame, StreamState& state, const ForwardContext& ctx) const;

  /// Restores trainability after loading or pretraining: the VAR backbone
  /// stays frozen, everything else trains.
  void apply_default_trainability();

 private:
  ModelConfig config_;
  ParamStore store_;
  std::unique_ptr<toyvar::ToyVar> var_;
  std::unique_ptr<encoder::Encoder> encoder_;
  std::unique_ptr<msim::Msim> msim_;
  std::unique_ptr<dwfm::Dwfm> dwfm_;
  std::unique_ptr<decoder::Decoder> decoder_;
};

/// Rounds every parameter to float32 precision, so values survive the
/// checkpoint format unchanged.
void round_params_to_float32(ParamStore& store);

}  // namespace hrvvs
