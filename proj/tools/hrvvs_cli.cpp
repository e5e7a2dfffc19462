// Command-line entry points: synth, pretrain-var, train, eval, infer, ablate.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "hrvvs/checkpoint.hpp"
#include "hrvvs/config.hpp"
#include "hrvvs/datasets.hpp"
#include "hrvvs/errors.hpp"
#include "hrvvs/png_io.hpp"
#include "hrvvs/synth.hpp"
#include "hrvvs/training.hpp"

namespace fs = std::filesystem;
using namespace hrvvs;

namespace {

struct RunOptions {
  std::string config_path;
  std::string profile;
  std::optional<std::uint64_t> seed;
  bool no_var = false, no_msim = false, no_dwfm = false;
  int max_steps = -1;
};

void add_run_options(CLI::App* cmd, RunOptions& o, bool with_flags = true) {
  cmd->add_option("--config", o.config_path, "JSON config file (keys are validated)")->check(CLI::ExistingFile);
  cmd->add_option("--profile", o.profile, "Base profile when no config is given: desk or paper");
  cmd->add_option("--seed", o.seed, "Overrides the configured seed");
  cmd->add_option("--max-steps", o.max_steps, "Overrides the configured optimiser step budget");
  if (with_flags) {
    cmd->add_flag("--no-var", o.no_var, "Disable the VAR prior branch");
    cmd->add_flag("--no-msim", o.no_msim, "Disable the spatiotemporal interaction module");
    cmd->add_flag("--no-dwfm", o.no_dwfm, "Disable dynamic weight fusion (plain local stitching)");
  }
}

RunConfig resolve_config(const RunOptions& o) {
  RunConfig c = o.config_path.empty() ? profile_by_name(o.profile.empty() ? "desk" : o.profile) : load_config(o.config_path);
  if (o.seed) c.seed = *o.seed;
  if (o.max_steps >= 0) c.max_steps = o.max_steps;
  if (o.no_var) c.model.flags.use_var = false;
  if (o.no_msim) c.model.flags.use_msim = false;
  if (o.no_dwfm) c.model.flags.use_dwfm = false;
  validate(c);
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

std::string log_csv(const std::vector<StepLog>& log) {
  std::string out = "step,learning_rate,loss\n";
  char buf[96];
  for (const StepLog& s : log) {
    std::snprintf(buf, sizeof buf, "%ld,%.9g,%.9g\n", s.step, s.learning_rate, s.loss);
    out += buf;
  }
  return out;
}

std::string pretrain_json(const toyvar::PretrainReport& r) {
  nlohmann::ordered_json j;
  j["initial_reconstruction"] = r.initial_reconstruction;
  j["final_reconstruction"] = r.final_reconstruction;
  j["initial_next_scale"] = r.initial_next_scale;
  j["final_next_scale"] = r.final_next_scale;
  j["steps"] = r.step_losses.size();
  return j.dump(2) + "\n";
}

Progress step_printer(long every) {
  return [every](const StepLog& s) {
    if (s.step == 1 || s.step % every == 0) std::fprintf(stderr, "step %ld  lr %.3g  loss %.5f\n", s.step, s.learning_rate, s.loss);
  };
}

std::vector<VideoFrames> load_split(const fs::path& data, const std::string& split, const RunConfig& c) {
  return load_videos(select_split(data::load_dataset(data), split, c.seed), c.resolution);
}

// ---- subcommands -----------------------------------------------------------

struct SynthArgs {
  std::string out;
  synth::SynthConfig config;
};

int run_synth(const SynthArgs& a) {
  synth::generate(a.config, a.out);
  std::fprintf(stderr, "wrote %d videos × %d frames to %s\n", a.config.videos, a.config.frames, a.out.c_str());
  return 0;
}

struct PretrainArgs {
  RunOptions run;
  std::string data, out, split = "train";
};

int run_pretrain(const PretrainArgs& a) {
  RunConfig c = resolve_config(a.run);
  const auto videos = load_split(a.data, a.split, c);
  HrvvsModel model(c.model, c.seed);
  const toyvar::PretrainReport r = pretrain_var(model, c, videos);
  const fs::path out(a.out);
  fs::create_directories(out);
  save_checkpoint(out / "var_checkpoint.bin", capture(c, 0, model.params(), nullptr));
  write_text(out / "pretrain.json", pretrain_json(r));
  std::fprintf(stderr, "reconstruction %.5f -> %.5f, next-scale CE %.4f -> %.4f\n", r.initial_reconstruction,
               r.final_reconstruction, r.initial_next_scale, r.final_next_scale);
  return 0;
}

struct TrainArgs {
  RunOptions run;
  std::string data, out, init, split = "train";
};

int run_train(const TrainArgs& a) {
  RunConfig c = resolve_config(a.run);
  const data::Split manifest = data::split(data::load_dataset(a.data), c.seed);
  const auto videos = load_split(a.data, a.split, c);
  HrvvsModel model(c.model, c.seed);
  bool pretrain = true;
  if (!a.init.empty()) {
    // Parameters from a previous phase (typically pretrain-var); the
    // optimiser starts fresh.
    restore(load_checkpoint(a.init), model.params(), nullptr);
    pretrain = false;
  }
  Adam adam;
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult r = train(model, adam, c, videos, pretrain, step_printer(25));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const fs::path out(a.out);
  fs::create_directories(out);
  save_checkpoint(out / "checkpoint.bin", capture(c, r.steps, model.params(), &adam));
  write_text(out / "train_log.csv", log_csv(r.log));
  write_text(out / "config.json", to_json(c).dump(2) + "\n");
  write_text(out / "split.json", data::split_manifest_json(manifest));
  if (r.pretrain) write_text(out / "pretrain.json", pretrain_json(*r.pretrain));
  std::fprintf(stderr, "trained %ld steps in %.1f s\n", r.steps, secs);
  return 0;
}

struct EvalArgs {
  std::string checkpoint, data, out, split = "test", from_masks;
  std::optional<std::uint64_t> seed;
  bool dump = false;
};

int run_eval(const EvalArgs& a) {
  if (a.checkpoint.empty() && a.from_masks.empty()) throw ConfigError("eval needs --checkpoint or --from-masks");
  std::optional<Checkpoint> ckpt;
  if (!a.checkpoint.empty()) ckpt = load_checkpoint(a.checkpoint);
  const std::uint64_t seed = a.seed ? *a.seed : ckpt ? ckpt->config.seed : 0;
  const auto records = select_split(data::load_dataset(a.data), a.split, seed);
  Evaluation e;
  if (!a.from_masks.empty()) {
    e = evaluate_masks(a.from_masks, records);
  } else {
    const auto model = model_from_checkpoint(*ckpt);
    e = evaluate(*model, load_videos(records, ckpt->config.resolution));
    if (a.dump) dump_masks(e, records, fs::path(a.out) / "masks");
  }
  write_report(e.report, a.out);
  std::fputs(metrics::report_csv(e.report).c_str(), stdout);
  return 0;
}

struct InferArgs {
  std::string checkpoint, frames, out;
};

int run_infer(const InferArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const auto model = model_from_checkpoint(ckpt);
  const fs::path out(a.out);
  fs::create_directories(out / "masks");
  fs::create_directories(out / "overlays");
  StreamState state = model->new_stream();
  int failures = 0;
  for (const fs::path& f : data::list_frames(a.frames)) {
    try {
      const Tensor image = png::read_rgb(f);
      const auto [h, w] = data::model_size(image.dim(1), image.dim(2), ckpt.config.resolution);
      const Tensor input = h == image.dim(1) && w == image.dim(2) ? image : resize_bilinear(image, h, w);
      Tensor logits = model->step(input, state, ForwardContext{}).logits.value();
      if (logits.dim(1) != image.dim(1) || logits.dim(2) != image.dim(2))
        logits = resize_bilinear(logits, image.dim(1), image.dim(2));
      const Mask mask = decoder::argmax_mask(logits);
      png::write_mask(out / "masks" / f.filename(), mask);
      png::write_rgb(out / "overlays" / f.filename(), overlay(image, mask));
    } catch (const std::exception& e) {
      ++failures;
      std::fprintf(stderr, "skipping %s: %s\n", f.string().c_str(), e.what());
    }
  }
  return failures ? 3 : 0;
}

struct AblateArgs {
  RunOptions run;
  std::string data, out, split = "train", eval_split = "train";
};

int run_ablate(const AblateArgs& a) {
  const RunConfig c = resolve_config(a.run);
  const auto train_videos = load_split(a.data, a.split, c);
  const auto eval_videos = a.eval_split == a.split ? train_videos : load_split(a.data, a.eval_split, c);
  const auto rows = run_ablation(c, train_videos, eval_videos, [](const std::string& row, const StepLog& s) {
    if (s.step == 1 || s.step % 50 == 0) std::fprintf(stderr, "[%s] step %ld  loss %.5f\n", row.c_str(), s.step, s.loss);
  });
  write_text(fs::path(a.out) / "ablation.csv", ablation_csv(rows));
  write_text(fs::path(a.out) / "ablation.json", ablation_json(rows));
  std::fputs(ablation_csv(rows).c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"High-resolution video vessel segmentation: data, training and evaluation"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "Generate the synthetic vessel video dataset");
  synth_cmd->add_option("--out", synth_args.out, "Output dataset root")->required();
  synth_cmd->add_option("--seed", synth_args.config.seed, "Generator seed");
  synth_cmd->add_option("--videos", synth_args.config.videos, "Number of videos");
  synth_cmd->add_option("--frames", synth_args.config.frames, "Frames per video");
  synth_cmd->add_option("--size", synth_args.config.height, "Frame side (multiple of 64)")
      ->each([&](const std::string&) { synth_args.config.width = synth_args.config.height; });
  synth_cmd->add_option("--jump-probability", synth_args.config.jump_probability, "Chance of an abrupt camera jump");
  synth_cmd->add_option("--occluders", synth_args.config.occluders, "Occluding blobs per video");

  PretrainArgs pre_args;
  auto* pre_cmd = app.add_subcommand("pretrain-var", "Pretrain the VAR prior backbone on training views");
  add_run_options(pre_cmd, pre_args.run, false);
  pre_cmd->add_option("--data", pre_args.data, "Dataset root")->required();
  pre_cmd->add_option("--split", pre_args.split, "train, val, test or all");
  pre_cmd->add_option("--out", pre_args.out, "Output directory")->required();

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train the segmentation model");
  add_run_options(train_cmd, train_args.run);
  train_cmd->add_option("--data", train_args.data, "Dataset root")->required();
  train_cmd->add_option("--split", train_args.split, "train, val, test or all");
  train_cmd->add_option("--init", train_args.init, "Start from a checkpoint's parameters and skip VAR pretraining")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train_args.out, "Output directory")->required();

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint (or dumped masks) on a split");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint file")->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", eval_args.data, "Dataset root")->required();
  eval_cmd->add_option("--split", eval_args.split, "train, val, test or all");
  eval_cmd->add_option("--seed", eval_args.seed, "Split seed (defaults to the checkpoint's)");
  eval_cmd->add_option("--out", eval_args.out, "Output directory for report.csv / report.json")->required();
  eval_cmd->add_flag("--dump-masks", eval_args.dump, "Write predicted palette masks under <out>/masks");
  eval_cmd->add_option("--from-masks", eval_args.from_masks, "Score masks dumped by an earlier run")
      ->check(CLI::ExistingDirectory);

  InferArgs infer_args;
  auto* infer_cmd = app.add_subcommand("infer", "Segment a directory of frames; writes masks and overlays");
  infer_cmd->add_option("--checkpoint", infer_args.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  infer_cmd->add_option("--frames", infer_args.frames, "Directory of PNG frames in temporal order")->required();
  infer_cmd->add_option("--out", infer_args.out, "Output directory")->required();

  AblateArgs ablate_args;
  auto* ablate_cmd = app.add_subcommand("ablate", "Train and score the five ablation variants");
  add_run_options(ablate_cmd, ablate_args.run, false);
  ablate_cmd->add_option("--data", ablate_args.data, "Dataset root")->required();
  ablate_cmd->add_option("--split", ablate_args.split, "Training split");
  ablate_cmd->add_option("--eval-split", ablate_args.eval_split, "Evaluation split");
  ablate_cmd->add_option("--out", ablate_args.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Help and version requests exit 0; malformed invocations are input errors.
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*synth_cmd) return run_synth(synth_args);
    if (*pre_cmd) return run_pretrain(pre_args);
    if (*train_cmd) return run_train(train_args);
    if (*eval_cmd) return run_eval(eval_args);
    if (*infer_cmd) return run_infer(infer_args);
    if (*ablate_cmd) return run_ablate(ablate_args);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const InputError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return 2;
  } catch (const IngestionError& e) {
    std::fprintf(stderr, "dataset error: %s\n", e.what());
    return 2;
  } catch (const ContractViolation& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
