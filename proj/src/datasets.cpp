#include "hrvvs/datasets.hpp"

#include <algorithm>

#include "hrvvs/errors.hpp"
#include "hrvvs/png_io.hpp"
#include "hrvvs/rng.hpp"
#include "json.hpp"

namespace hrvvs::data {

namespace {

std::vector<fs::path> sorted_pngs(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::vector<fs::path> list_frames(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IngestionError("frames directory not found: " + dir.string());
  return sorted_pngs(dir);
}

std::vector<VideoRecord> load_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw IngestionError("dataset root not found: " + root.string());
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory() && fs::is_directory(e.path() / "frames")) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  std::vector<VideoRecord> out;
  for (const fs::path& dir : dirs) {
    VideoRecord r;
    r.id = dir.filename().string();
    r.frames = sorted_pngs(dir / "frames");
    for (const fs::path& f : r.frames) {
      const fs::path m = dir / "masks" / f.filename();
      if (!fs::is_regular_file(m)) throw IngestionError("missing mask for frame " + f.string());
      Mask mask;
      try {
        mask = png::read_mask(m);
      } catch (const IoError& e) {
        throw IngestionError(std::string("unreadable mask ") + m.string() + ": " + e.what());
      }
      for (std::uint8_t v : mask.labels)
        if (v > 2) throw IngestionError("invalid mask value " + std::to_string(v) + " in " + m.string());
      if (r.masks.empty()) {
        r.height = mask.height;
        r.width = mask.width;
      } else if (mask.height != r.height || mask.width != r.width) {
        throw IngestionError("mask size differs within video: " + m.string());
      }
      r.masks.push_back(m);
    }
    if (!r.frames.empty()) out.push_back(std::move(r));
  }
  return out;
}

Split split(const std::vector<VideoRecord>& records, std::uint64_t seed) {
  if (records.empty()) throw ContractViolation("split: no videos");
  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());
  const std::size_t n = records.size();
  const std::size_t n_val = n / 10, n_test = n / 5;
  Split s;
  for (std::size_t i = 0; i < n; ++i) {
    const VideoRecord& r = records[order[i]];
    if (i < n_val) s.val.push_back(r);
    else if (i < n_val + n_test) s.test.push_back(r);
    else s.train.push_back(r);
  }
  auto by_id = [](const VideoRecord& a, const VideoRecord& b) { return a.id < b.id; };
  std::sort(s.train.begin(), s.train.end(), by_id);
  std::sort(s.val.begin(), s.val.end(), by_id);
  std::sort(s.test.begin(), s.test.end(), by_id);
  return s;
}

std::string split_manifest_json(const Split& split) {
  auto ids = [](const std::vector<VideoRecord>& v) {
    std::vector<std::string> out;
    for (const auto& r : v) out.push_back(r.id);
    return out;
  };
  nlohmann::ordered_json j;
  j["train"] = ids(split.train);
  j["val"] = ids(split.val);
  j["test"] = ids(split.test);
  return j.dump(2) + "\n";
}

std::vector<ClipWindow> sample_windows(const VideoRecord& record, int length, int stride) {
  if (length < 1 || stride < 1) throw ContractViolation("sample_windows: length and stride must be positive");
  std::vector<ClipWindow> out;
  for (int s = 0; s + length <= record.size(); s += stride) out.push_back({record.id, s, length});
  return out;
}

std::pair<int, int> model_size(int h, int w, int resolution) {
  if (resolution == 0) {
    if (h % 64 || w % 64)
      throw InputError("frame " + std::to_string(h) + "×" + std::to_string(w) +
                       " is not a multiple of 64; set a model resolution");
    return {h, w};
  }
  if (resolution < 64 || resolution % 64) throw ConfigError("model resolution must be a positive multiple of 64");
  return {resolution, resolution};
}

Mask resize_mask(const Mask& mask, int h, int w) {
  if (mask.height == h && mask.width == w) return mask;
  Mask out(h, w);
  for (int y = 0; y < h; ++y) {
    const int sy = std::min(mask.height - 1, static_cast<int>((y + 0.5) * mask.height / h));
    for (int x = 0; x < w; ++x) {
      const int sx = std::min(mask.width - 1, static_cast<int>((x + 0.5) * mask.width / w));
      out.at(y, x) = mask.at(sy, sx);
    }
  }
  return out;
}

Sample load_sample(const VideoRecord& record, int index, int resolution) {
  if (index < 0 || index >= record.size()) throw ContractViolation("load_sample: frame index out of range");
  Sample s;
  Tensor img = png::read_rgb(record.frames[static_cast<std::size_t>(index)]);
  Mask mask = png::read_mask(record.masks[static_cast<std::size_t>(index)]);
  if (img.dim(1) != mask.height || img.dim(2) != mask.width)
    throw IngestionError("frame and mask sizes differ: " + record.frames[static_cast<std::size_t>(index)].string());
  s.source_height = mask.height;
  s.source_width = mask.width;
  const auto [h, w] = model_size(mask.height, mask.width, resolution);
  s.image = (h == img.dim(1) && w == img.dim(2)) ? std::move(img) : resize_bilinear(img, h, w);
  s.mask = resize_mask(mask, h, w);
  return s;
}

}  // namespace hrvvs::data
