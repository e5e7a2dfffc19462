#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "hrvvs/model.hpp"
#include "json.hpp"

namespace hrvvs {

/// Every knob of a run. Serialised into each checkpoint.
struct RunConfig {
  std::string profile = "desk";
  std::uint64_t seed = 0;
  int resolution = 0;  // 0 = native (frame sides must be multiples of 64)
  ModelConfig model;

  int clip_length = 4;
  int clip_stride = 1;
  double learning_rate = 1e-3;
  double lr_power = 0.9;
  int epochs = 1;
  int batch_size = 1;   // windows per optimiser step
  int max_steps = 0;    // > 0 overrides epochs
  int pretrain_steps = 200;
  int pretrain_batch = 4;
  double pretrain_learning_rate = 2e-3;
};

/// Small model and schedule sized for a single CPU core.
RunConfig desk_profile();
/// Hyper-parameters as reported for the full-scale experiments.
RunConfig paper_profile();
RunConfig profile_by_name(const std::string& name);

nlohmann::json to_json(const RunConfig& config);

/// Applies the keys of `j` on top of `base`; unknown keys or ill-typed
/// values raise ConfigError.
RunConfig apply_json(const nlohmann::json& j, RunConfig base);

/// Reads a JSON config file. Its optional "profile" key picks the base.
RunConfig load_config(const std::filesystem::path& path);

/// Fails with ConfigError if any component is invalid.
void validate(const RunConfig& config);

}  // namespace hrvvs
