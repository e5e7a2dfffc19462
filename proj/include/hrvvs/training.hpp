#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hrvvs/checkpoint.hpp"
#include "hrvvs/config.hpp"
#include "hrvvs/datasets.hpp"
#include "hrvvs/metrics.hpp"
#include "hrvvs/model.hpp"

namespace hrvvs {

namespace fs = std::filesystem;

/// Frames of one video loaded at model resolution.
struct VideoFrames {
  data::VideoRecord record;
  std::vector<data::Sample> samples;
};

std::vector<VideoFrames> load_videos(const std::vector<data::VideoRecord>& records, int resolution);

/// Picks a split by name: "train", "val", "test" or "all".
std::vector<data::VideoRecord> select_split(const std::vector<data::VideoRecord>& records, const std::string& name,
                                            std::uint64_t seed);

struct StepLog {
  long step = 0;
  double learning_rate = 0.0;
  double loss = 0.0;
};

struct TrainResult {
  std::vector<StepLog> log;
  long steps = 0;
  std::optional<toyvar::PretrainReport> pretrain;
};

using Progress = std::function<void(const StepLog&)>;

/// Total optimiser steps for `windows` training windows.
long planned_steps(const RunConfig& config, std::size_t windows);

/// VAR backbone pretraining on the views of every training frame. Leaves
/// the backbone frozen afterwards.
toyvar::PretrainReport pretrain_var(HrvvsModel& model, const RunConfig& config, const std::vector<VideoFrames>& videos);

/// Phase 0 (VAR backbone pretraining on training views, when
/// pretrain_steps > 0 and `pretrain` is set) followed by segmentation
/// training with Adam and the polynomial schedule. Each window is streamed
/// frame by frame through fresh per-window memory; the loss is the mean
/// over its frames, gradients are averaged over the batch.
TrainResult train(HrvvsModel& model, Adam& adam, const RunConfig& config, const std::vector<VideoFrames>& videos,
                  bool pretrain = true, const Progress& progress = {});

/// Mean training loss of a window without updating anything.
double window_loss(const HrvvsModel& model, const VideoFrames& video, int start, int length);

struct Evaluation {
  metrics::MetricsReport report;
  std::vector<metrics::FrameRecord> frames;
  std::map<std::string, std::vector<Mask>> masks;  // per video, at source resolution
};

/// Streams each video through the model (state reset per video) and scores
/// the hard argmax masks.
Evaluation evaluate(const HrvvsModel& model, const std::vector<VideoFrames>& videos);

/// Scores previously dumped masks <dir>/<video>/<frame file> against the
/// ground truth.
Evaluation evaluate_masks(const fs::path& dir, const std::vector<data::VideoRecord>& records);

void write_report(const metrics::MetricsReport& report, const fs::path& out_dir);
void dump_masks(const Evaluation& eval, const std::vector<data::VideoRecord>& records, const fs::path& dir);

/// Image with a class-coloured tint and solid contours; pixels labelled 0
/// are untouched.
Tensor overlay(const Tensor& image, const Mask& mask);

struct AblationRow {
  std::string name;
  AblationFlags flags;
  metrics::MetricValues values;
};

/// The five rows basic, M1, M2, M3, Ours with their flag patterns.
std::vector<std::pair<std::string, AblationFlags>> ablation_rows();

using AblationProgress = std::function<void(const std::string& row, const StepLog&)>;
/// Trains and evaluates a single variant: `base` with its flags replaced.
AblationRow run_ablation_row(const RunConfig& base, const std::string& name, const AblationFlags& flags,
                             const std::vector<VideoFrames>& train_videos, const std::vector<VideoFrames>& eval_videos,
                             const AblationProgress& progress = {});
/// Trains one model per ablation row from the same configuration and seed
/// (only the flags differ) and evaluates each on `eval_videos`.
std::vector<AblationRow> run_ablation(const RunConfig& base, const std::vector<VideoFrames>& train_videos,
                                      const std::vector<VideoFrames>& eval_videos,
                                      const AblationProgress& progress = {});
std::string ablation_csv(const std::vector<AblationRow>& rows);
std::string ablation_json(const std::vector<AblationRow>& rows);

/// Builds a model from a checkpoint (config, parameters, optimiser).
std::unique_ptr<HrvvsModel> model_from_checkpoint(const Checkpoint& checkpoint, Adam* adam = nullptr);

}  // namespace hrvvs
