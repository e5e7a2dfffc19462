#include "hrvvs/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "hrvvs/errors.hpp"

namespace hrvvs {

using nlohmann::json;

RunConfig desk_profile() {
  RunConfig c;
  c.profile = "desk";
  c.model.encoder.channels = {16, 32, 64, 128, 256};
  c.clip_length = 4;
  c.learning_rate = 1e-3;
  c.epochs = 1;
  c.batch_size = 1;
  c.max_steps = 300;
  c.pretrain_steps = 200;
  return c;
}

RunConfig paper_profile() {
  RunConfig c;
  c.profile = "paper";
  c.resolution = 1024;
  c.model.encoder.channels = {16, 32, 64, 128, 256};
  c.clip_length = 4;
  c.learning_rate = 1e-5;
  c.lr_power = 0.9;
  c.epochs = 15;
  c.batch_size = 32;
  c.max_steps = 0;
  c.pretrain_steps = 2000;
  return c;
}

RunConfig profile_by_name(const std::string& name) {
  if (name == "desk") return desk_profile();
  if (name == "paper") return paper_profile();
  throw ConfigError("unknown profile '" + name + "' (expected desk or paper)");
}

namespace {

struct Field {
  const char* key;
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const json&)> set;
};

template <typename T, typename Member>
Field field(const char* key, Member member) {
  return {key, [member](const RunConfig& c) { return json(member(const_cast<RunConfig&>(c))); },
          [member](RunConfig& c, const json& j) { member(c) = j.get<T>(); }};
}

// Ablation switches are stored as "disable" flags.
Field negated(const char* key, bool AblationFlags::*flag) {
  return {key, [flag](const RunConfig& c) { return json(!(c.model.flags.*flag)); },
          [flag](RunConfig& c, const json& j) { c.model.flags.*flag = !j.get<bool>(); }};
}

#define HRVVS_FIELD(T, key, expr) field<T>(key, [](RunConfig& c) -> T& { return expr; })

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      HRVVS_FIELD(std::string, "profile", c.profile),
      HRVVS_FIELD(std::uint64_t, "seed", c.seed),
      HRVVS_FIELD(int, "resolution", c.resolution),
      HRVVS_FIELD(decltype(encoder::StageConfig::channels), "stage_channels", c.model.encoder.channels),
      HRVVS_FIELD(decltype(encoder::StageConfig::inject), "prior_stages", c.model.encoder.inject),
      HRVVS_FIELD(int, "codebook_size", c.model.toyvar.codebook_size),
      HRVVS_FIELD(int, "code_dim", c.model.toyvar.code_dim),
      HRVVS_FIELD(decltype(toyvar::ToyVarConfig::scales), "var_scales", c.model.toyvar.scales),
      HRVVS_FIELD(int, "var_input_size", c.model.toyvar.input_size),
      HRVVS_FIELD(int, "var_decoder_channels", c.model.toyvar.decoder_channels),
      HRVVS_FIELD(int, "var_model_dim", c.model.toyvar.model_dim),
      HRVVS_FIELD(int, "var_heads", c.model.toyvar.heads),
      HRVVS_FIELD(int, "adapter_bottleneck", c.model.toyvar.adapter_bottleneck),
      HRVVS_FIELD(int, "memory_capacity", c.model.memory.capacity),
      HRVVS_FIELD(int, "memory_max_age_exponent", c.model.memory.max_age_exponent),
      HRVVS_FIELD(std::vector<int>, "memory_token_stages", c.model.memory.token_stages),
      HRVVS_FIELD(int, "msim_heads", c.model.msim.heads),
      HRVVS_FIELD(double, "msim_dropout", c.model.msim.dropout),
      HRVVS_FIELD(bool, "msim_local_positions", c.model.msim.local_positions),
      HRVVS_FIELD(int, "dwfm_heads", c.model.dwfm.heads),
      HRVVS_FIELD(int, "dwfm_model_dim", c.model.dwfm.model_dim),
      HRVVS_FIELD(double, "dwfm_delta", c.model.dwfm.delta),
      HRVVS_FIELD(int, "dwfm_reference_grid", c.model.dwfm.reference_grid),
      HRVVS_FIELD(decltype(dwfm::DwfmConfig::fusion_init), "fusion_init", c.model.dwfm.fusion_init),
      negated("no_var", &AblationFlags::use_var),
      negated("no_msim", &AblationFlags::use_msim),
      negated("no_dwfm", &AblationFlags::use_dwfm),
      HRVVS_FIELD(int, "clip_length", c.clip_length),
      HRVVS_FIELD(int, "clip_stride", c.clip_stride),
      HRVVS_FIELD(double, "learning_rate", c.learning_rate),
      HRVVS_FIELD(double, "lr_power", c.lr_power),
      HRVVS_FIELD(int, "epochs", c.epochs),
      HRVVS_FIELD(int, "batch_size", c.batch_size),
      HRVVS_FIELD(int, "max_steps", c.max_steps),
      HRVVS_FIELD(int, "pretrain_steps", c.pretrain_steps),
      HRVVS_FIELD(int, "pretrain_batch", c.pretrain_batch),
      HRVVS_FIELD(double, "pretrain_learning_rate", c.pretrain_learning_rate),
  };
  return table;
}

#undef HRVVS_FIELD

}  // namespace

json to_json(const RunConfig& config) {
  json j = json::object();
  for (const Field& f : fields()) j[f.key] = f.get(config);
  j["no_var"] = !config.model.flags.use_var;
  j["no_msim"] = !config.model.flags.use_msim;
  j["no_dwfm"] = !config.model.flags.use_dwfm;
  return j;
}

RunConfig apply_json(const json& j, RunConfig base) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "no_var") {
        base.model.flags.use_var = !value.get<bool>();
        continue;
      }
      if (key == "no_msim") {
        base.model.flags.use_msim = !value.get<bool>();
        continue;
      }
      if (key == "no_dwfm") {
        base.model.flags.use_dwfm = !value.get<bool>();
        continue;
      }
      bool known = false;
      for (const Field& f : fields())
        if (key == f.key) {
          f.set(base, value);
          known = true;
          break;
        }
      if (!known) throw ConfigError("unknown config key '" + key + "'");
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  const std::string profile = j.is_object() && j.contains("profile") && j["profile"].is_string()
                                  ? j["profile"].get<std::string>()
                                  : std::string("desk");
  RunConfig c = apply_json(j, profile_by_name(profile));
  validate(c);
  return c;
}

void validate(const RunConfig& c) {
  validate(c.model);
  if (c.resolution != 0 && (c.resolution < 64 || c.resolution % 64))
    throw ConfigError("resolution must be 0 or a positive multiple of 64");
  if (c.clip_length < 1 || c.clip_stride < 1) throw ConfigError("clip length and stride must be positive");
  if (!(c.learning_rate >= 0.0) || !(c.lr_power >= 0.0)) throw ConfigError("learning rate and decay power must be non-negative");
  if (c.epochs < 0 || c.batch_size < 1 || c.max_steps < 0) throw ConfigError("epochs, batch size and steps must be valid");
  if (c.pretrain_steps < 0 || c.pretrain_batch < 1 || !(c.pretrain_learning_rate >= 0.0))
    throw ConfigError("pretraining settings must be non-negative");
}

}  // namespace hrvvs
