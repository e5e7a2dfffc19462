#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "hrvvs/config.hpp"
#include "hrvvs/optim.hpp"

namespace hrvvs {

/// Single-file archive: 8-byte magic "HRVVSCKP", u32 version, u64 manifest
/// length, JSON manifest (config, step, tensor table), then float32
/// little-endian arrays in manifest order.
struct Checkpoint {
  RunConfig config;
  long step = 0;
  std::map<std::string, Tensor> tensors;  // "param/…", "adam.m/…", "adam.v/…"
};

Checkpoint capture(const RunConfig& config, long step, const ParamStore& params, const Adam* adam);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies stored parameters into `params` (names and shapes must match
/// exactly) and, if given, restores the optimiser moments and step count.
void restore(const Checkpoint& checkpoint, ParamStore& params, Adam* adam);

}  // namespace hrvvs
