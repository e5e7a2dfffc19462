#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "hrvvs/mask.hpp"
#include "hrvvs/tensor.hpp"

namespace hrvvs::synth {

struct SynthConfig {
  std::uint64_t seed = 7;
  int videos = 4;
  int frames = 16;
  int height = 128;
  int width = 128;
  int tubes_per_class = 2;     // labelled tubes of each vessel class
  int distractors = 2;         // unlabelled tubes of similar outline
  int occluders = 1;           // opaque blobs; labels underneath are 0
  double tube_radius = 6.0;    // pixels
  double max_step = 2.0;       // bound on smooth per-frame camera motion (pixels)
  double jump_probability = 0.1;
  double jump_size = 14.0;     // pixels
  double brightness_drift = 0.12;
  int margin = 16;             // camera travel limit; objects start inside it
};

void validate(const SynthConfig& config);

struct SynthVideo {
  std::vector<Tensor> frames;  // 3×H×W
  std::vector<Mask> masks;
  std::vector<std::array<double, 2>> camera;  // (dy, dx) offset per frame
};

SynthVideo render_video(const SynthConfig& config, int video);

/// Writes <root>/video_XX/{frames,masks}/NNNN.png.
void generate(const SynthConfig& config, const std::filesystem::path& root);

}  // namespace hrvvs::synth
