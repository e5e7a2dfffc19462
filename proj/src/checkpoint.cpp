#include "hrvvs/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include "hrvvs/errors.hpp"

namespace hrvvs {

namespace {

constexpr char kMagic[8] = {'H', 'R', 'V', 'V', 'S', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::ifstream& in, const std::string& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError("truncated checkpoint " + path);
  return v;
}

}  // namespace

Checkpoint capture(const RunConfig& config, long step, const ParamStore& params, const Adam* adam) {
  Checkpoint c;
  c.config = config;
  c.step = step;
  for (const auto& [name, p] : params.all()) c.tensors["param/" + name] = p.value();
  if (adam) {
    for (const auto& [name, t] : adam->first_moments()) c.tensors["adam.m/" + name] = t;
    for (const auto& [name, t] : adam->second_moments()) c.tensors["adam.v/" + name] = t;
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  nlohmann::json manifest;
  manifest["config"] = to_json(checkpoint.config);
  manifest["step"] = checkpoint.step;
  nlohmann::json table = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : checkpoint.tensors) {
    table.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.size();
  }
  manifest["tensors"] = table;
  const std::string text = manifest.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : checkpoint.tensors) {
    std::vector<float> buf(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) buf[i] = static_cast<float>(t[i]);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw IoError(path.string() + " is not a checkpoint");
  const auto version = get<std::uint32_t>(in, path.string());
  if (version != kVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  const auto len = get<std::uint64_t>(in, path.string());
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw IoError("truncated checkpoint manifest");
  Checkpoint c;
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text);
    c.config = apply_json(manifest.at("config"), profile_by_name(manifest.at("config").at("profile").get<std::string>()));
    c.step = manifest.at("step").get<long>();
    for (const auto& e : manifest.at("tensors")) {
      const Shape shape = e.at("shape").get<Shape>();
      Tensor t(shape);
      std::vector<float> buf(t.size());
      if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float))))
        throw IoError("truncated tensor data in " + path.string());
      for (std::size_t i = 0; i < buf.size(); ++i) t[i] = buf[i];
      c.tensors.emplace(e.at("name").get<std::string>(), std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt checkpoint manifest: " + std::string(e.what()));
  }
  return c;
}

void restore(const Checkpoint& checkpoint, ParamStore& params, Adam* adam) {
  for (const auto& [name, p] : params.all()) {
    const auto it = checkpoint.tensors.find("param/" + name);
    if (it == checkpoint.tensors.end()) throw ConfigError("checkpoint lacks parameter " + name);
    if (it->second.shape() != p.shape())
      throw ConfigError("checkpoint parameter " + name + " has shape " + shape_string(it->second.shape()));
    Var handle = p;
    handle.mutable_value() = it->second;
  }
  if (!adam) return;
  adam->first_moments().clear();
  adam->second_moments().clear();
  for (const auto& [key, t] : checkpoint.tensors) {
    if (key.rfind("adam.m/", 0) == 0) adam->first_moments()[key.substr(7)] = t;
    if (key.rfind("adam.v/", 0) == 0) adam->second_moments()[key.substr(7)] = t;
  }
  adam->set_steps(checkpoint.step);
}

}  // namespace hrvvs
