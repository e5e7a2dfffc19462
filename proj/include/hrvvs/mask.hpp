#pragma once

#include <cstdint>
#include <vector>

namespace hrvvs {

/// Integer label map, row-major. 0 = background, 1..K−1 = vessel classes.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> labels;

  Mask() = default;
  Mask(int h, int w, std::uint8_t fill = 0) : height(h), width(w), labels(static_cast<std::size_t>(h) * w, fill) {}

  std::uint8_t& at(int y, int x) { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return labels.size(); }

  bool operator==(const Mask&) const = default;
};

/// Binary map (1 where label == cls) as doubles.
std::vector<double> class_indicator(const Mask& mask, int cls);

}  // namespace hrvvs
