#include "dagan/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "dagan/error.hpp"

namespace dagan {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'D', 'A', 'G', 'T'};

template <class T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::ifstream& in, const fs::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw LoadError("truncated tensor file " + path.string());
  return v;
}

json shape_json(const Shape& s) { return json::array({s.n, s.c, s.h, s.w}); }

}  // namespace

void save_tensors(const fs::path& path, const NamedTensors& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write " + path.string());
  out.write(kMagic, 4);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    for (int d : {t.shape().n, t.shape().c, t.shape().h, t.shape().w}) put<std::int32_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
  }
  if (!out) throw LoadError("write failed for " + path.string());
}

NamedTensors load_tensors(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw LoadError("not a tensor file: " + path.string());
  const auto n = get<std::uint32_t>(in, path);
  NamedTensors out;
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto len = get<std::uint32_t>(in, path);
    if (len > 4096) throw LoadError("corrupt tensor name in " + path.string());
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw LoadError("truncated tensor file " + path.string());
    Shape s;
    s.n = get<std::int32_t>(in, path);
    s.c = get<std::int32_t>(in, path);
    s.h = get<std::int32_t>(in, path);
    s.w = get<std::int32_t>(in, path);
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0 || s.numel() > (std::size_t{1} << 31))
      throw LoadError("corrupt tensor shape in " + path.string());
    Tensor t(s);
    if (!in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(float))))
      throw LoadError("truncated tensor file " + path.string());
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

json model_spec_to_json(const ModelSpec& s) {
  return {{"generator",
           {{"in_channels", s.generator.in_channels},
            {"base_width", s.generator.base_width},
            {"n_residual_blocks", s.generator.n_residual_blocks},
            {"n_downsampling", s.generator.n_downsampling},
            {"plan", s.generator.plan()}}},
          {"regressor",
           {{"in_channels", s.regressor.in_channels},
            {"base_width", s.regressor.base_width},
            {"width", s.regressor.width},
            {"levels", s.regressor.levels},
            {"bottleneck_blocks", s.regressor.bottleneck_blocks},
            {"plan", s.regressor.plan()}}},
          {"discriminator",
           {{"in_channels", s.discriminator.in_channels},
            {"base_width", s.discriminator.base_width},
            {"n_blocks", s.discriminator.n_blocks},
            {"max_width", s.discriminator.max_width},
            {"slope", s.discriminator.slope},
            {"plan", s.discriminator.plan()}}},
          {"aligners", s.aligners}};
}

ModelSpec model_spec_from_json(const json& j) {
  try {
    ModelSpec s;
    const json& g = j.at("generator");
    s.generator.in_channels = g.at("in_channels");
    s.generator.base_width = g.at("base_width");
    s.generator.n_residual_blocks = g.at("n_residual_blocks");
    s.generator.n_downsampling = g.at("n_downsampling");
    const json& r = j.at("regressor");
    s.regressor.in_channels = r.at("in_channels");
    s.regressor.base_width = r.at("base_width");
    s.regressor.width = r.at("width");
    s.regressor.levels = r.at("levels");
    s.regressor.bottleneck_blocks = r.at("bottleneck_blocks");
    const json& d = j.at("discriminator");
    s.discriminator.in_channels = d.at("in_channels");
    s.discriminator.base_width = d.at("base_width");
    s.discriminator.n_blocks = d.at("n_blocks");
    s.discriminator.max_width = d.at("max_width");
    s.discriminator.slope = d.at("slope");
    s.aligners = j.at("aligners");
    return s;
  } catch (const json::exception& e) {
    throw LoadError(std::string("invalid model description: ") + e.what());
  }
}

void save_checkpoint(const fs::path& dir, DaganModel& model, const std::vector<NamedOptimizer>& optimizers,
                     const CheckpointInfo& info) {
  fs::create_directories(dir);
  json index;
  index["step"] = info.step;
  index["epoch"] = info.epoch;
  index["config_hash"] = info.config_hash;
  index["model"] = model_spec_to_json(model.spec());
  for (const NamedNetwork& n : model.networks()) {
    NamedTensors ts;
    json params = json::array();
    for (const auto& p : n.params->items()) {
      ts.emplace_back(p.name, p.var.value());
      params.push_back({{"name", p.name}, {"shape", shape_json(p.var.shape())}});
    }
    const std::string file = n.name + ".bin";
    save_tensors(dir / file, ts);
    index["networks"][n.name] = {{"file", file}, {"parameters", n.params->count()}, {"tensors", params}};
  }
  for (const NamedOptimizer& o : optimizers) {
    const std::string file = "optim_" + o.name + ".bin";
    save_tensors(dir / file, o.optimizer->state());
    index["optimizers"][o.name] = {{"file", file}};
  }
  std::ofstream out(dir / "index.json");
  if (!out) throw LoadError("cannot write " + (dir / "index.json").string());
  out << index.dump(2) << '\n';
}

namespace {

json read_index(const fs::path& dir) {
  const fs::path p = dir / "index.json";
  std::ifstream in(p);
  if (!in) throw LoadError("checkpoint index not found: " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw LoadError("invalid checkpoint index " + p.string() + ": " + e.what());
  }
}

}  // namespace

CheckpointInfo read_checkpoint_info(const fs::path& dir) {
  const json index = read_index(dir);
  CheckpointInfo info;
  info.step = index.value("step", std::int64_t{0});
  info.epoch = index.value("epoch", 0);
  info.config_hash = index.value("config_hash", std::string());
  info.model = model_spec_from_json(index.at("model"));
  return info;
}

CheckpointInfo load_checkpoint(const fs::path& dir, DaganModel& model, const std::vector<NamedOptimizer>& optimizers) {
  const json index = read_index(dir);
  CheckpointInfo info = read_checkpoint_info(dir);
  for (const NamedNetwork& n : model.networks()) {
    if (!index.contains("networks") || !index["networks"].contains(n.name))
      throw ValidationError("checkpoint " + dir.string() + " has no network '" + n.name + "'");
    const NamedTensors ts = load_tensors(dir / index["networks"][n.name]["file"].get<std::string>());
    std::map<std::string, const Tensor*> by_name;
    for (const auto& [name, t] : ts) by_name[name] = &t;
    for (auto& p : n.params->items()) {
      auto it = by_name.find(p.name);
      if (it == by_name.end()) throw ValidationError("checkpoint missing " + n.name + "/" + p.name);
      if (!(it->second->shape() == p.var.shape()))
        throw ValidationError("checkpoint shape mismatch for " + n.name + "/" + p.name + ": " +
                              it->second->shape().str() + " vs " + p.var.shape().str());
      p.var.mutable_value() = *it->second;
    }
    if (by_name.size() != n.params->size())
      throw ValidationError("checkpoint network '" + n.name + "' has extra tensors");
  }
  for (const NamedOptimizer& o : optimizers) {
    if (!index.contains("optimizers") || !index["optimizers"].contains(o.name))
      throw ValidationError("checkpoint has no optimizer '" + o.name + "'");
    o.optimizer->load_state(load_tensors(dir / index["optimizers"][o.name]["file"].get<std::string>()));
  }
  return info;
}

}  // namespace dagan
