#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hrvvs/mask.hpp"
#include "hrvvs/tensor.hpp"

namespace hrvvs::data {

namespace fs = std::filesystem;

/// One video in the <root>/<id>/{frames,masks}/*.png layout. Frames and
/// masks are paired by file name and ordered lexicographically.
struct VideoRecord {
  std::string id;
  std::vector<fs::path> frames;
  std::vector<fs::path> masks;
  int height = 0;
  int width = 0;

  int size() const { return static_cast<int>(frames.size()); }
};

/// Scans `root` (sorted by id). Masks are validated eagerly: a frame without
/// a mask, or a label outside {0,1,2}, raises IngestionError naming the file.
std::vector<VideoRecord> load_dataset(const fs::path& root);

/// Reads a frames-only directory (used by inference).
std::vector<fs::path> list_frames(const fs::path& dir);

struct Split {
  std::vector<VideoRecord> train, val, test;
};

/// Video-level 7:1:2 split: val = floor(n/10), test = floor(n/5), train
/// gets the remainder (so 35 → 25/3/7, 10 → 7/1/2, 4 → 4/0/0). Videos are
/// shuffled by `seed` before assignment.
Split split(const std::vector<VideoRecord>& records, std::uint64_t seed);

std::string split_manifest_json(const Split& split);

struct ClipWindow {
  std::string video;
  int start = 0;
  int length = 0;
};

/// Windows [s, s + length) for s = 0, stride, … while inside the video.
std::vector<ClipWindow> sample_windows(const VideoRecord& record, int length, int stride = 1);

/// Model-facing frame: resized to a size accepted by the model.
struct Sample {
  Tensor image;  // 3×H×W in [0,1]
  Mask mask;     // H×W labels
  int source_height = 0;
  int source_width = 0;
};

/// Target size for a frame of h×w: unchanged when both sides are already
/// multiples of 64 and `resolution` is 0, else `resolution`×`resolution`
/// (must itself be a multiple of 64).
std::pair<int, int> model_size(int h, int w, int resolution);

/// Loads frame i (bilinear for the image, nearest for the mask).
Sample load_sample(const VideoRecord& record, int index, int resolution);

/// Nearest-neighbour label resampling.
Mask resize_mask(const Mask& mask, int h, int w);

}  // namespace hrvvs::data
