#include "hrvvs/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "hrvvs/errors.hpp"
#include "hrvvs/png_io.hpp"
#include "hrvvs/rng.hpp"

namespace hrvvs::synth {

void validate(const SynthConfig& c) {
  if (c.videos < 1 || c.frames < 1) throw ConfigError("synth: need at least one video and one frame");
  if (c.height < 64 || c.width < 64 || c.height % 64 || c.width % 64)
    throw ConfigError("synth: resolution must be a positive multiple of 64");
  if (c.tubes_per_class < 0 || c.distractors < 0 || c.occluders < 0) throw ConfigError("synth: negative object count");
  if (c.tube_radius <= 0.5 || c.max_step < 0 || c.jump_size < 0 || c.margin < 0)
    throw ConfigError("synth: radius, step, jump size and margin must be non-negative");
  if (c.jump_probability < 0 || c.jump_probability > 1) throw ConfigError("synth: jump probability outside [0,1]");
  const double lo = c.margin + c.tube_radius + 2.0;
  if (2.0 * lo >= std::min(c.height, c.width)) throw ConfigError("synth: margin too large for the resolution");
}

namespace {

using Vec = std::array<double, 2>;  // (y, x)
using Rgb = std::array<double, 3>;

struct Tube {
  std::vector<Vec> points;  // polyline samples of a quadratic Bézier
  double radius;
  Rgb color;
  int label;  // 0 for distractors
  double y0, y1, x0, x1;  // bounding box including the radius
};

struct Blob {
  Vec centre;
  double ry, rx;
  Rgb color;
};

constexpr Rgb kGlisson{0.88, 0.84, 0.62};
constexpr Rgb kVein{0.22, 0.24, 0.52};
constexpr Rgb kDistractor{0.80, 0.60, 0.52};
constexpr Rgb kInstrument{0.72, 0.73, 0.78};

double segment_distance(const Vec& p, const Vec& a, const Vec& b) {
  const double vy = b[0] - a[0], vx = b[1] - a[1];
  const double wy = p[0] - a[0], wx = p[1] - a[1];
  const double len2 = vy * vy + vx * vx;
  const double t = len2 > 0 ? std::clamp((wy * vy + wx * vx) / len2, 0.0, 1.0) : 0.0;
  const double dy = wy - t * vy, dx = wx - t * vx;
  return std::sqrt(dy * dy + dx * dx);
}

double tube_distance(const Tube& t, const Vec& p) {
  double best = 1e300;
  for (std::size_t i = 1; i < t.points.size(); ++i) best = std::min(best, segment_distance(p, t.points[i - 1], t.points[i]));
  return best;
}

Tube make_tube(Rng& rng, double lo_y, double hi_y, double lo_x, double hi_x, double radius, const Rgb& color,
               int label) {
  auto pick = [&] { return Vec{lo_y + rng.uniform() * (hi_y - lo_y), lo_x + rng.uniform() * (hi_x - lo_x)}; };
  const Vec a = pick(), c = pick(), b = pick();
  Tube t{{}, radius, color, label, 1e300, -1e300, 1e300, -1e300};
  constexpr int kSamples = 40;
  for (int i = 0; i <= kSamples; ++i) {
    const double s = static_cast<double>(i) / kSamples;
    const Vec p{(1 - s) * (1 - s) * a[0] + 2 * (1 - s) * s * b[0] + s * s * c[0],
                (1 - s) * (1 - s) * a[1] + 2 * (1 - s) * s * b[1] + s * s * c[1]};
    t.points.push_back(p);
    t.y0 = std::min(t.y0, p[0] - radius - 1);
    t.y1 = std::max(t.y1, p[0] + radius + 1);
    t.x0 = std::min(t.x0, p[1] - radius - 1);
    t.x1 = std::max(t.x1, p[1] + radius + 1);
  }
  return t;
}

Rgb jitter(const Rgb& c, Rng& rng, double amount) {
  Rgb out;
  for (std::size_t i = 0; i < 3; ++i) out[i] = std::clamp(c[i] + (rng.uniform() - 0.5) * 2 * amount, 0.0, 1.0);
  return out;
}

}  // namespace

SynthVideo render_video(const SynthConfig& config, int video) {
  validate(config);
  Rng rng(config.seed * 1000003ULL + static_cast<std::uint64_t>(video) * 7919ULL + 1);
  const int h = config.height, w = config.width, m = config.margin;

  // Background texture over the whole camera travel range.
  const int th = h + 2 * m + 2, tw = w + 2 * m + 2;
  Tensor texture({3, th, tw});
  const Rgb base = jitter({0.62, 0.30, 0.26}, rng, 0.05);
  struct Wave {
    double fy, fx, phase, amp;
  };
  std::vector<Wave> waves;
  for (int k = 0; k < 5; ++k)
    waves.push_back({(rng.uniform() - 0.5) * 0.25, (rng.uniform() - 0.5) * 0.25, rng.uniform() * 6.283, 0.04 + 0.04 * rng.uniform()});
  for (int y = 0; y < th; ++y)
    for (int x = 0; x < tw; ++x) {
      double s = 1.0;
      for (const Wave& wv : waves) s += wv.amp * std::sin(wv.fy * y + wv.fx * x + wv.phase);
      const double grain = (rng.uniform() - 0.5) * 0.05;
      for (int c = 0; c < 3; ++c) texture.at(c, y, x) = std::clamp(base[static_cast<std::size_t>(c)] * s + grain, 0.0, 1.0);
    }

  // Scene objects, placed so that camera travel never pushes them off frame.
  const double r = config.tube_radius;
  const double lo_y = m + r + 2, hi_y = h - m - r - 2, lo_x = m + r + 2, hi_x = w - m - r - 2;
  std::vector<Tube> tubes;
  for (int i = 0; i < config.distractors; ++i)
    tubes.push_back(make_tube(rng, lo_y, hi_y, lo_x, hi_x, r * (0.8 + 0.4 * rng.uniform()), jitter(kDistractor, rng, 0.04), 0));
  for (int i = 0; i < config.tubes_per_class; ++i) {
    tubes.push_back(make_tube(rng, lo_y, hi_y, lo_x, hi_x, r, jitter(kGlisson, rng, 0.03), 1));
    tubes.push_back(make_tube(rng, lo_y, hi_y, lo_x, hi_x, r, jitter(kVein, rng, 0.03), 2));
  }
  std::vector<Blob> blobs;
  for (int i = 0; i < config.occluders; ++i)
    blobs.push_back({{lo_y + rng.uniform() * (hi_y - lo_y), lo_x + rng.uniform() * (hi_x - lo_x)},
                     h * (0.05 + 0.04 * rng.uniform()),
                     w * (0.08 + 0.06 * rng.uniform()),
                     jitter(kInstrument, rng, 0.03)});

  SynthVideo out;
  Vec cam{0.0, 0.0};
  double heading = rng.uniform() * 6.283185307179586;
  const double drift_phase = rng.uniform() * 6.283185307179586;
  for (int t = 0; t < config.frames; ++t) {
    if (t > 0) {
      heading += 0.4 * rng.normal();
      const double step = config.max_step * (0.3 + 0.7 * rng.uniform());
      cam[0] += step * std::sin(heading);
      cam[1] += step * std::cos(heading);
      if (rng.bernoulli(config.jump_probability)) {
        const double a = rng.uniform() * 6.283185307179586;
        cam[0] += config.jump_size * std::sin(a);
        cam[1] += config.jump_size * std::cos(a);
      }
      cam[0] = std::clamp(cam[0], -static_cast<double>(m), static_cast<double>(m));
      cam[1] = std::clamp(cam[1], -static_cast<double>(m), static_cast<double>(m));
    }
    out.camera.push_back(cam);
    const double gain = 1.0 + config.brightness_drift * std::sin(6.283185307179586 * t / 12.0 + drift_phase);

    Tensor frame({3, h, w});
    Mask mask(h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        // Scene coordinate seen by pixel (y, x) under camera offset cam.
        const Vec p{y + 0.5 - cam[0], x + 0.5 - cam[1]};
        // Texture is sampled bilinearly so sub-pixel motion stays smooth.
        const double ty = std::clamp(p[0] - 0.5 + m + 1, 0.0, th - 1.001);
        const double tx = std::clamp(p[1] - 0.5 + m + 1, 0.0, tw - 1.001);
        const int iy = static_cast<int>(ty), ix = static_cast<int>(tx);
        const double fy = ty - iy, fx = tx - ix;
        Rgb col;
        for (int c = 0; c < 3; ++c)
          col[static_cast<std::size_t>(c)] =
              (1 - fy) * ((1 - fx) * texture.at(c, iy, ix) + fx * texture.at(c, iy, ix + 1)) +
              fy * ((1 - fx) * texture.at(c, iy + 1, ix) + fx * texture.at(c, iy + 1, ix + 1));
        std::uint8_t label = 0;
        for (const Tube& tube : tubes) {
          if (p[0] < tube.y0 || p[0] > tube.y1 || p[1] < tube.x0 || p[1] > tube.x1) continue;
          const double d = tube_distance(tube, p);
          const double alpha = std::clamp(tube.radius + 0.5 - d, 0.0, 1.0);
          if (alpha <= 0.0) continue;
          const double shade = 0.85 + 0.15 * std::max(0.0, 1.0 - d / tube.radius);
          for (std::size_t c = 0; c < 3; ++c) col[c] = (1 - alpha) * col[c] + alpha * tube.color[c] * shade;
          if (d <= tube.radius) label = static_cast<std::uint8_t>(tube.label);
        }
        for (const Blob& b : blobs) {
          const double dy = (p[0] - b.centre[0]) / b.ry, dx = (p[1] - b.centre[1]) / b.rx;
          const double d = (std::sqrt(dy * dy + dx * dx) - 1.0) * std::min(b.ry, b.rx);
          const double alpha = std::clamp(0.5 - d, 0.0, 1.0);
          if (alpha <= 0.0) continue;
          for (std::size_t c = 0; c < 3; ++c) col[c] = (1 - alpha) * col[c] + alpha * b.color[c];
          if (d <= 0.0) label = 0;
        }
        for (int c = 0; c < 3; ++c) frame.at(c, y, x) = std::clamp(col[static_cast<std::size_t>(c)] * gain, 0.0, 1.0);
        mask.at(y, x) = label;
      }
    out.frames.push_back(std::move(frame));
    out.masks.push_back(std::move(mask));
  }
  return out;
}

void generate(const SynthConfig& config, const std::filesystem::path& root) {
  validate(config);
  for (int v = 0; v < config.videos; ++v) {
    char name[32];
    std::snprintf(name, sizeof name, "video_%02d", v);
    const auto dir = root / name;
    std::error_code ec;
    std::filesystem::create_directories(dir / "frames", ec);
    std::filesystem::create_directories(dir / "masks", ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    const SynthVideo video = render_video(config, v);
    for (int t = 0; t < config.frames; ++t) {
      char file[32];
      std::snprintf(file, sizeof file, "%04d.png", t);
      png::write_rgb(dir / "frames" / file, video.frames[static_cast<std::size_t>(t)]);
      png::write_mask(dir / "masks" / file, video.masks[static_cast<std::size_t>(t)]);
    }
  }
}

}  // namespace hrvvs::synth
