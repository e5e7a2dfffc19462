#include "hrvvs/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

#include "hrvvs/errors.hpp"

namespace hrvvs::png {

namespace {

struct File {
  std::FILE* f = nullptr;
  explicit File(const std::filesystem::path& p, const char* mode) : f(std::fopen(p.c_str(), mode)) {}
  ~File() {
    if (f) std::fclose(f);
  }
};

[[noreturn]] void png_error_fn(png_structp png, png_const_charp msg) {
  auto* what = static_cast<std::string*>(png_get_error_ptr(png));
  if (what) *what = msg;
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

struct Decoded {
  int width = 0, height = 0, channels = 0;
  bool palette = false;
  std::vector<std::uint8_t> pixels;
};

// setjmp-based error handling must not cross C++ object lifetimes, so the
// libpng calls live in plain functions that only touch raw buffers.
Decoded decode(const std::filesystem::path& path, bool expand) {
  File file(path, "rb");
  if (!file.f) throw IoError("cannot open " + path.string());
  std::uint8_t sig[8];
  if (std::fread(sig, 1, 8, file.f) != 8 || png_sig_cmp(sig, 0, 8)) throw IoError(path.string() + " is not a PNG");
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng initialisation failed");
  }
  Decoded out;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("decoding " + path.string() + ": " + err);
  }
  png_init_io(png, file.f);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  out.palette = color == PNG_COLOR_TYPE_PALETTE;
  if (depth == 16) png_set_strip_16(png);
  if (expand) {
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
  } else if (depth < 8) {
    png_set_packing(png);
  }
  png_read_update_info(png, info);
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  out.pixels.resize(stride * static_cast<std::size_t>(out.height));
  rows.resize(static_cast<std::size_t>(out.height));
  for (int y = 0; y < out.height; ++y) rows[static_cast<std::size_t>(y)] = out.pixels.data() + stride * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void encode(const std::filesystem::path& path, int width, int height, int color, const std::uint8_t* pixels,
            int channels, const std::vector<png_color>* palette) {
  File file(path, "wb");
  if (!file.f) throw IoError("cannot write " + path.string());
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng initialisation failed");
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("encoding " + path.string() + ": " + err);
  }
  png_init_io(png, file.f);
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, color,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  if (palette) png_set_PLTE(png, info, palette->data(), static_cast<int>(palette->size()));
  png_write_info(png, info);
  for (int y = 0; y < height; ++y)
    rows[static_cast<std::size_t>(y)] = const_cast<png_bytep>(pixels) + static_cast<std::size_t>(y) * width * channels;
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Tensor read_rgb(const std::filesystem::path& path) {
  const Decoded d = decode(path, true);
  if (d.channels != 3) throw IoError(path.string() + ": unsupported channel layout");
  Tensor t({3, d.height, d.width});
  for (int y = 0; y < d.height; ++y)
    for (int x = 0; x < d.width; ++x)
      for (int c = 0; c < 3; ++c)
        t.at(c, y, x) = d.pixels[(static_cast<std::size_t>(y) * d.width + x) * 3 + c] / 255.0;
  return t;
}

void write_rgb(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) throw ContractViolation("write_rgb: expected 3×H×W");
  const int h = image.dim(1), w = image.dim(2);
  std::vector<std::uint8_t> px(static_cast<std::size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(image.at(c, y, x), 0.0, 1.0);
        px[(static_cast<std::size_t>(y) * w + x) * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
  encode(path, w, h, PNG_COLOR_TYPE_RGB, px.data(), 3, nullptr);
}

Mask read_mask(const std::filesystem::path& path) {
  const Decoded d = decode(path, false);
  if (d.channels != 1) throw IoError(path.string() + ": mask must be a palette or 8-bit grayscale PNG");
  Mask m(d.height, d.width);
  m.labels = d.pixels;
  return m;
}

void write_mask(const std::filesystem::path& path, const Mask& mask) {
  std::vector<png_color> palette(256);
  for (int i = 0; i < 256; ++i) {
    const auto g = static_cast<png_byte>(i);
    palette[static_cast<std::size_t>(i)] = {g, g, g};
  }
  palette[0] = {0, 0, 0};
  palette[1] = {0, 200, 0};
  palette[2] = {0, 80, 255};
  int top = 2;
  for (std::uint8_t v : mask.labels) top = std::max<int>(top, v);
  palette.resize(static_cast<std::size_t>(top) + 1);
  encode(path, mask.width, mask.height, PNG_COLOR_TYPE_PALETTE, mask.labels.data(), 1, &palette);
}

}  // namespace hrvvs::png
