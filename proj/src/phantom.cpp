#include "dagan/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dagan/error.hpp"

namespace dagan {

namespace fs = std::filesystem;

float modality_forward(float a, ModalityMap map) {
  if (map == ModalityMap::identity) return a;
  return static_cast<float>(std::tanh(2.0 * a) / std::tanh(2.0));
}

float modality_inverse(float b, ModalityMap map) {
  if (map == ModalityMap::identity) return b;
  const double v = std::clamp(static_cast<double>(b), -1.0, 1.0) * std::tanh(2.0);
  return static_cast<float>(std::atanh(v) / 2.0);
}

namespace {

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

// Blends an anti-aliased ellipse (about one pixel of edge ramp) into img.
void draw_ellipse(Image2D& img, double cy, double cx, double ry, double rx, double angle, float value) {
  const double ca = std::cos(angle), sa = std::sin(angle);
  const double rmin = std::min(ry, rx);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      const double y = r - cy, x = c - cx;
      const double u = (ca * x + sa * y) / rx;
      const double v = (-sa * x + ca * y) / ry;
      const double rho = std::sqrt(u * u + v * v);
      const double alpha = std::clamp((1.0 - rho) * rmin + 0.5, 0.0, 1.0);
      if (alpha <= 0.0) continue;
      float& px = img.at(r, c);
      px = static_cast<float>(px * (1.0 - alpha) + value * alpha);
    }
  }
}

}  // namespace

Image2D render_phantom(int size, int n_shapes, Rng& rng) {
  if (size < 8) throw ArgumentError("phantom size must be >= 8");
  Image2D img(size, size, -1.0f);
  const double half = size / 2.0;
  const double body_ry = uniform(rng, 0.34, 0.44) * size;
  const double body_rx = uniform(rng, 0.30, 0.42) * size;
  const double body_cy = half + uniform(rng, -0.04, 0.04) * size;
  const double body_cx = half + uniform(rng, -0.04, 0.04) * size;
  draw_ellipse(img, body_cy, body_cx, body_ry, body_rx, uniform(rng, -0.3, 0.3),
               static_cast<float>(uniform(rng, -0.5, -0.2)));
  for (int i = 0; i < n_shapes; ++i) {
    const double ry = uniform(rng, 0.06, 0.2) * size;
    const double rx = uniform(rng, 0.06, 0.2) * size;
    const double rad = uniform(rng, 0.0, 0.55);
    const double th = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double cy = body_cy + rad * body_ry * std::sin(th);
    const double cx = body_cx + rad * body_rx * std::cos(th);
    // The first inner shape is bright so every phantom spans at least half the range.
    const float value = static_cast<float>(i == 0 ? uniform(rng, 0.5, 0.9) : uniform(rng, -0.8, 0.9));
    draw_ellipse(img, cy, cx, ry, rx, uniform(rng, 0.0, std::numbers::pi), value);
  }
  return img;
}

PairedSample generate_phantom_pair(const PhantomSpec& spec, int index) {
  Rng rng = make_rng(spec.seed, "phantom/" + std::to_string(index));
  PairedSample p;
  p.sample_id = "phantom_" + std::to_string(index);
  p.source = render_phantom(spec.image_size, spec.n_shapes, rng);
  p.target = p.source;
  for (float& v : p.target.values) v = modality_forward(v, spec.modality_map);
  return p;
}

DatasetManifest generate_phantom_dataset(const PhantomSpec& spec, const fs::path& out_dir) {
  if (spec.n_samples < 0) throw ArgumentError("n_samples must be >= 0");
  DatasetManifest m;
  m.modality_names = {"A", "B"};
  m.root = out_dir;
  const bool png = spec.format == io::Format::png16;
  const IntensityScale scale = png ? IntensityScale{0.0, 65535.0} : IntensityScale{-1.0, 1.0};
  m.normalization["A"] = scale;
  m.normalization["B"] = scale;
  const std::string ext = png ? ".png" : ".raw";
  fs::create_directories(out_dir);
  for (int i = 0; i < spec.n_samples; ++i) {
    PairedSample p = generate_phantom_pair(spec, i);
    p.source.scale = scale;
    p.target.scale = scale;
    PairRecord rec;
    rec.id = p.sample_id;
    rec.source = fs::path("source") / (rec.id + ext);
    rec.target = fs::path("target") / (rec.id + ext);
    io::write_grid(out_dir / rec.source, io::Grid{p.source.height, p.source.width, 1, denormalize(p.source)});
    io::write_grid(out_dir / rec.target, io::Grid{p.target.height, p.target.width, 1, denormalize(p.target)});
    m.pairs.push_back(std::move(rec));
  }
  save_manifest(m, out_dir / "manifest.json");
  return m;
}

}  // namespace dagan
