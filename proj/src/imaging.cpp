#include "dagan/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "dagan/error.hpp"
#include "dagan/io.hpp"
#include "dagan/rng.hpp"

namespace dagan {

namespace fs = std::filesystem;

Image2D::Image2D(int h, int w, std::vector<float> v) : height(h), width(w), values(std::move(v)) {
  if (values.size() != static_cast<std::size_t>(h) * w) {
    throw ArgumentError("Image2D: " + std::to_string(values.size()) + " values for " + std::to_string(h) + "x" +
                        std::to_string(w));
  }
}

Tensor Image2D::to_tensor() const { return Tensor(Shape{1, 1, height, width}, values); }

Image2D Image2D::from_tensor(const Tensor& t, int n, int c) {
  const Shape s = t.shape();
  Image2D img(s.h, s.w);
  std::copy_n(t.plane(n, c), s.plane(), img.values.begin());
  return img;
}

void validate_image(const Image2D& image, const std::string& what) {
  if (image.height < 8 || image.width < 8) {
    throw ValidationError(what + ": image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                          " is smaller than 8x8");
  }
  for (float v : image.values) {
    if (!std::isfinite(v)) throw ValidationError(what + ": non-finite pixel value");
  }
}

Image2D normalize(int height, int width, const std::vector<float>& raw, double lo_phys, double hi_phys) {
  if (!(hi_phys > lo_phys)) {
    throw ArgumentError("normalize: hi_phys (" + std::to_string(hi_phys) + ") must exceed lo_phys (" +
                        std::to_string(lo_phys) + ")");
  }
  if (raw.size() != static_cast<std::size_t>(height) * width) throw ArgumentError("normalize: size mismatch");
  Image2D out(height, width);
  out.scale = IntensityScale{lo_phys, hi_phys};
  for (std::size_t i = 0; i < raw.size(); ++i) {
    out.values[i] = std::clamp(out.scale.to_normalized(raw[i]), -1.0f, 1.0f);
  }
  return out;
}

std::vector<float> denormalize(const Image2D& image) {
  std::vector<float> out(image.values.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(image.scale.to_physical(image.values[i]));
  return out;
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(on.begin(), on.end(), std::uint8_t{1}));
}

Mask foreground_mask(const Image2D& reference, float background_level, float tolerance) {
  if (tolerance < 0.0f) throw ArgumentError("foreground_mask: tolerance must be >= 0");
  Mask m{reference.height, reference.width, std::vector<std::uint8_t>(reference.size(), 0)};
  for (std::size_t i = 0; i < reference.size(); ++i) {
    m.on[i] = std::abs(reference.values[i] - background_level) > tolerance ? 1 : 0;
  }
  return m;
}

std::vector<std::size_t> epoch_order(std::size_t count, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  Rng rng = make_rng(seed, "shuffle/" + std::to_string(epoch));
  for (std::size_t i = count; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
    std::swap(order[i - 1], order[std::min(j, i - 1)]);
  }
  return order;
}

const IntensityScale& DatasetManifest::scale_for(int modality) const {
  static const IntensityScale identity{};
  const auto it = normalization.find(modality_names.at(static_cast<std::size_t>(modality)));
  return it == normalization.end() ? identity : it->second;
}

fs::path DatasetManifest::resolve(const fs::path& p) const { return p.is_absolute() ? p : root / p; }

PairedSample DatasetManifest::load_pair(std::size_t index) const {
  const PairRecord& rec = pairs.at(index);
  auto load = [&](const fs::path& p, int modality) {
    const io::Grid g = io::read_grid(resolve(p));
    const IntensityScale& s = scale_for(modality);
    return normalize(g.height, g.width, g.values, s.lo_phys, s.hi_phys);
  };
  PairedSample out;
  out.sample_id = rec.id;
  out.source = load(rec.source, 0);
  out.target = load(rec.target, 1);
  if (rec.aligned_target) out.aligned_target = load(*rec.aligned_target, 1);
  if (!out.source.same_shape(out.target) || (out.aligned_target && !out.aligned_target->same_shape(out.source))) {
    throw ValidationError("sample '" + rec.id + "': source and target shapes differ");
  }
  validate_image(out.source, "sample '" + rec.id + "' source");
  validate_image(out.target, "sample '" + rec.id + "' target");
  return out;
}

DatasetManifest load_dataset(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw LoadError("cannot open manifest '" + manifest_path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("cannot parse manifest '" + manifest_path.string() + "': " + e.what());
  }

  DatasetManifest m;
  m.root = manifest_path.has_parent_path() ? manifest_path.parent_path() : fs::path(".");
  try {
    if (j.contains("modalities")) {
      const auto mods = j.at("modalities").get<std::vector<std::string>>();
      if (mods.size() != 2) throw ValidationError("manifest must name exactly two modalities");
      m.modality_names = {mods[0], mods[1]};
    }
    if (j.contains("normalization")) {
      for (const auto& [name, range] : j.at("normalization").items()) {
        const auto r = range.get<std::vector<double>>();
        if (r.size() != 2 || !(r[1] > r[0])) throw ValidationError("bad normalization range for '" + name + "'");
        m.normalization[name] = IntensityScale{r[0], r[1]};
      }
    }
    if (j.contains("split")) {
      const auto s = j.at("split").get<std::string>();
      if (s != "train" && s != "test") throw ValidationError("split must be 'train' or 'test'");
      m.split = s == "train" ? Split::train : Split::test;
    }
    std::set<std::string> ids;
    for (const auto& p : j.value("pairs", nlohmann::json::array())) {
      PairRecord r;
      r.id = p.at("id").get<std::string>();
      r.source = p.at("source").get<std::string>();
      r.target = p.at("target").get<std::string>();
      if (p.contains("aligned_target") && !p.at("aligned_target").is_null()) {
        r.aligned_target = fs::path(p.at("aligned_target").get<std::string>());
      }
      if (p.contains("subject") && !p.at("subject").is_null()) r.subject = p.at("subject").get<std::string>();
      if (p.contains("slice") && !p.at("slice").is_null()) r.slice = p.at("slice").get<int>();
      if (!ids.insert(r.id).second) throw ValidationError("duplicate sample id '" + r.id + "'");
      m.pairs.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("malformed manifest '" + manifest_path.string() + "': " + e.what());
  }

  for (const auto& r : m.pairs) {
    const auto src = io::peek_shape(m.resolve(r.source));
    const auto tgt = io::peek_shape(m.resolve(r.target));
    if (src != tgt) {
      throw ValidationError("sample '" + r.id + "': source " + std::to_string(src.first) + "x" +
                            std::to_string(src.second) + " vs target " + std::to_string(tgt.first) + "x" +
                            std::to_string(tgt.second));
    }
    if (r.aligned_target && io::peek_shape(m.resolve(*r.aligned_target)) != src) {
      throw ValidationError("sample '" + r.id + "': aligned_target shape differs from source");
    }
  }
  return m;
}

void save_manifest(const DatasetManifest& m, const fs::path& manifest_path) {
  nlohmann::json j;
  j["modalities"] = {m.modality_names[0], m.modality_names[1]};
  nlohmann::json norm = nlohmann::json::object();
  for (const auto& [name, s] : m.normalization) norm[name] = {s.lo_phys, s.hi_phys};
  j["normalization"] = norm;
  j["split"] = m.split == Split::train ? "train" : "test";
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& r : m.pairs) {
    nlohmann::json p{{"id", r.id}, {"source", r.source.generic_string()}, {"target", r.target.generic_string()}};
    p["aligned_target"] = r.aligned_target ? nlohmann::json(r.aligned_target->generic_string()) : nlohmann::json();
    if (r.subject) p["subject"] = *r.subject;
    if (r.slice) p["slice"] = *r.slice;
    pairs.push_back(std::move(p));
  }
  j["pairs"] = std::move(pairs);
  if (manifest_path.has_parent_path()) fs::create_directories(manifest_path.parent_path());
  std::ofstream out(manifest_path);
  if (!out) throw LoadError("cannot write manifest '" + manifest_path.string() + "'");
  out << j.dump(2) << "\n";
}

}  // namespace dagan
