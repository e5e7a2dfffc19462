#include "hrvvs/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "hrvvs/errors.hpp"
#include "hrvvs/png_io.hpp"

namespace hrvvs {

std::vector<VideoFrames> load_videos(const std::vector<data::VideoRecord>& records, int resolution) {
  std::vector<VideoFrames> out;
  for (const auto& r : records) {
    VideoFrames v{r, {}};
    for (int i = 0; i < r.size(); ++i) v.samples.push_back(data::load_sample(r, i, resolution));
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<data::VideoRecord> select_split(const std::vector<data::VideoRecord>& records, const std::string& name,
                                            std::uint64_t seed) {
  if (name == "all") return records;
  if (records.empty()) throw ContractViolation("dataset has no videos");
  const data::Split s = data::split(records, seed);
  const std::vector<data::VideoRecord>* chosen = nullptr;
  if (name == "train") chosen = &s.train;
  else if (name == "val") chosen = &s.val;
  else if (name == "test") chosen = &s.test;
  else throw ConfigError("unknown split '" + name + "' (train, val, test or all)");
  if (chosen->empty()) throw ContractViolation("split '" + name + "' has no videos");
  return *chosen;
}

long planned_steps(const RunConfig& config, std::size_t windows) {
  if (config.max_steps > 0) return config.max_steps;
  const long per_epoch = static_cast<long>((windows + static_cast<std::size_t>(config.batch_size) - 1) /
                                           static_cast<std::size_t>(config.batch_size));
  return per_epoch * config.epochs;
}

namespace {

struct WindowRef {
  std::size_t video;
  int start;
};

// Streams one window; backpropagates each frame's share of `weight`·mean loss.
double run_window(const HrvvsModel& model, const VideoFrames& video, int start, int length, double weight,
                  const ForwardContext& ctx, bool backprop) {
  StreamState state = model.new_stream();
  double total = 0.0;
  for (int t = 0; t < length; ++t) {
    const data::Sample& s = video.samples[static_cast<std::size_t>(start + t)];
    const FrameOutput out = model.step(s.image, state, ctx);
    const Var loss = decoder::segmentation_loss(out.logits, s.mask);
    const double v = loss.value()[0];
    if (!std::isfinite(v))
      throw TrainingFailure("non-finite loss on " + video.record.id + " frame " + std::to_string(start + t));
    total += v;
    // Memory and fusion history are stored detached, so frames contribute
    // independent graphs and can be backpropagated one at a time.
    if (backprop) backward(scale(loss, weight / length));
  }
  return total / length;
}

std::vector<Tensor> pretrain_corpus(const std::vector<VideoFrames>& videos) {
  std::vector<Tensor> corpus;
  for (const auto& v : videos)
    for (const auto& s : v.samples) {
      const views::ViewSet vs = views::decompose(s.image);
      for (int m = 0; m < encoder::kViews; ++m) corpus.push_back(vs.view(m));
    }
  return corpus;
}

}  // namespace

toyvar::PretrainReport pretrain_var(HrvvsModel& model, const RunConfig& config, const std::vector<VideoFrames>& videos) {
  if (videos.empty()) throw ContractViolation("pretrain_var: no videos");
  Rng prng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  toyvar::PretrainOptions opts{config.pretrain_steps, config.pretrain_batch, config.pretrain_learning_rate};
  toyvar::PretrainReport report = toyvar::pretrain(model.var(), model.params(), pretrain_corpus(videos), opts, prng);
  model.apply_default_trainability();
  return report;
}

TrainResult train(HrvvsModel& model, Adam& adam, const RunConfig& config, const std::vector<VideoFrames>& videos,
                  bool pretrain, const Progress& progress) {
  if (videos.empty()) throw ContractViolation("train: no training videos");
  std::vector<WindowRef> windows;
  for (std::size_t v = 0; v < videos.size(); ++v)
    for (const auto& w : data::sample_windows(videos[v].record, config.clip_length, config.clip_stride))
      windows.push_back({v, w.start});
  if (windows.empty()) throw InputError("train: videos are shorter than the clip length");

  TrainResult result;
  if (pretrain && config.pretrain_steps > 0 && config.model.flags.use_var)
    result.pretrain = pretrain_var(model, config, videos);

  const long total = planned_steps(config, windows.size());
  Rng rng(config.seed + 1);
  ForwardContext ctx{true, &rng};
  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  for (long step = 0; step < total; ++step) {
    double batch_loss = 0.0;
    for (int b = 0; b < config.batch_size; ++b) {
      if (cursor == order.size()) {
        order.resize(windows.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order.begin(), order.end());
        cursor = 0;
      }
      const WindowRef& w = windows[order[cursor++]];
      batch_loss += run_window(model, videos[w.video], w.start, config.clip_length, 1.0 / config.batch_size, ctx, true);
    }
    const double lr = poly_lr(config.learning_rate, step, total, config.lr_power);
    adam.step(model.params(), lr);
    StepLog log{step + 1, lr, batch_loss / config.batch_size};
    result.log.push_back(log);
    if (progress) progress(log);
  }
  result.steps = total;
  return result;
}

double window_loss(const HrvvsModel& model, const VideoFrames& video, int start, int length) {
  return run_window(model, video, start, length, 1.0, ForwardContext{}, false);
}

Evaluation evaluate(const HrvvsModel& model, const std::vector<VideoFrames>& videos) {
  if (videos.empty()) throw ContractViolation("evaluate: no videos");
  Evaluation eval;
  for (const auto& video : videos) {
    StreamState state = model.new_stream();
    auto& masks = eval.masks[video.record.id];
    for (std::size_t i = 0; i < video.samples.size(); ++i) {
      const data::Sample& s = video.samples[i];
      const FrameOutput out = model.step(s.image, state, ForwardContext{});
      Tensor logits = out.logits.value();
      Mask gt = s.mask;
      if (s.source_height != logits.dim(1) || s.source_width != logits.dim(2)) {
        logits = resize_bilinear(logits, s.source_height, s.source_width);
        gt = png::read_mask(video.record.masks[i]);
      }
      Mask pred = decoder::argmax_mask(logits);
      eval.frames.push_back({video.record.id, static_cast<int>(i), metrics::evaluate_frame(pred, gt)});
      masks.push_back(std::move(pred));
    }
  }
  eval.report = metrics::aggregate(eval.frames);
  return eval;
}

Evaluation evaluate_masks(const fs::path& dir, const std::vector<data::VideoRecord>& records) {
  if (records.empty()) throw ContractViolation("evaluate_masks: no videos");
  Evaluation eval;
  for (const auto& r : records)
    for (int i = 0; i < r.size(); ++i) {
      const fs::path p = dir / r.id / r.frames[static_cast<std::size_t>(i)].filename();
      if (!fs::is_regular_file(p)) throw IngestionError("missing dumped mask " + p.string());
      const Mask pred = png::read_mask(p);
      const Mask gt = png::read_mask(r.masks[static_cast<std::size_t>(i)]);
      eval.frames.push_back({r.id, i, metrics::evaluate_frame(pred, gt)});
    }
  eval.report = metrics::aggregate(eval.frames);
  return eval;
}

void write_report(const metrics::MetricsReport& report, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream(out_dir / "report.csv") << metrics::report_csv(report);
  std::ofstream(out_dir / "report.json") << metrics::report_json(report);
}

void dump_masks(const Evaluation& eval, const std::vector<data::VideoRecord>& records, const fs::path& dir) {
  for (const auto& r : records) {
    const auto it = eval.masks.find(r.id);
    if (it == eval.masks.end()) continue;
    fs::create_directories(dir / r.id);
    for (std::size_t i = 0; i < it->second.size(); ++i)
      png::write_mask(dir / r.id / r.frames[i].filename(), it->second[i]);
  }
}

Tensor overlay(const Tensor& image, const Mask& mask) {
  if (image.rank() != 3 || image.dim(1) != mask.height || image.dim(2) != mask.width)
    throw ContractViolation("overlay: image and mask sizes differ");
  static constexpr double kColors[3][3] = {{0, 0, 0}, {0.0, 1.0, 0.2}, {0.1, 0.5, 1.0}};
  Tensor out = image;
  const int h = mask.height, w = mask.width;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int c = mask.at(y, x);
      if (c == 0) continue;
      const auto& col = kColors[std::min(c, 2)];
      const bool edge = y == 0 || x == 0 || y == h - 1 || x == w - 1 || mask.at(y - 1, x) != c ||
                        mask.at(y + 1, x) != c || mask.at(y, x - 1) != c || mask.at(y, x + 1) != c;
      const double a = edge ? 1.0 : 0.25;
      for (int k = 0; k < 3; ++k) out.at(k, y, x) = (1 - a) * image.at(k, y, x) + a * col[k];
    }
  return out;
}

std::vector<std::pair<std::string, AblationFlags>> ablation_rows() {
  return {{"basic", {false, false, false}},
          {"M1", {true, true, false}},
          {"M2", {true, false, true}},
          {"M3", {false, true, true}},
          {"Ours", {true, true, true}}};
}

AblationRow run_ablation_row(const RunConfig& base, const std::string& name, const AblationFlags& flags,
                             const std::vector<VideoFrames>& train_videos, const std::vector<VideoFrames>& eval_videos,
                             const AblationProgress& progress) {
  RunConfig config = base;
  config.model.flags = flags;
  HrvvsModel model(config.model, config.seed);
  Adam adam;
  Progress step_progress;
  if (progress) step_progress = [&](const StepLog& log) { progress(name, log); };
  train(model, adam, config, train_videos, true, step_progress);
  return {name, flags, evaluate(model, eval_videos).report.mean};
}

std::vector<AblationRow> run_ablation(const RunConfig& base, const std::vector<VideoFrames>& train_videos,
                                      const std::vector<VideoFrames>& eval_videos, const AblationProgress& progress) {
  std::vector<AblationRow> rows;
  for (const auto& [name, flags] : ablation_rows())
    rows.push_back(run_ablation_row(base, name, flags, train_videos, eval_videos, progress));
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "Method,VAR,MSIM,DWFM";
  for (const char* c : metrics::kColumns) out += std::string(",") + c;
  out += "\n";
  for (const auto& r : rows) {
    out += r.name;
    for (bool on : {r.flags.use_var, r.flags.use_msim, r.flags.use_dwfm}) out += on ? ",x" : ",";
    for (double v : r.values.v) {
      char buf[32];
      std::snprintf(buf, sizeof buf, ",%.6f", v);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

std::string ablation_json(const std::vector<AblationRow>& rows) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json e;
    e["method"] = r.name;
    e["VAR"] = r.flags.use_var;
    e["MSIM"] = r.flags.use_msim;
    e["DWFM"] = r.flags.use_dwfm;
    for (std::size_t k = 0; k < metrics::kColumns.size(); ++k) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6f", r.values.v[k]);
      e[metrics::kColumns[k]] = std::stod(buf);
    }
    j.push_back(e);
  }
  return j.dump(2) + "\n";
}

std::unique_ptr<HrvvsModel> model_from_checkpoint(const Checkpoint& checkpoint, Adam* adam) {
  auto model = std::make_unique<HrvvsModel>(checkpoint.config.model, checkpoint.config.seed);
  restore(checkpoint, model->params(), adam);
  return model;
}

}  // namespace hrvvs
