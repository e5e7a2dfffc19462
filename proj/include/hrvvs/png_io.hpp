#pragma once

#include <filesystem>

#include "hrvvs/mask.hpp"
#include "hrvvs/tensor.hpp"

namespace hrvvs::png {

/// Reads any 8/16-bit PNG as a 3×H×W tensor in [0,1] (gray is replicated,
/// alpha dropped). Throws IoError.
Tensor read_rgb(const std::filesystem::path& path);

/// Writes a 3×H×W tensor (values clamped to [0,1], rounded to 8 bits).
void write_rgb(const std::filesystem::path& path, const Tensor& image);

/// Reads raw label values: palette indices for palette images, the gray
/// value for 8-bit grayscale. Throws IoError for other formats.
Mask read_mask(const std::filesystem::path& path);

/// 8-bit palette PNG: 0 black, 1 green, 2 blue, further entries gray.
void write_mask(const std::filesystem::path& path, const Mask& mask);

}  // namespace hrvvs::png
