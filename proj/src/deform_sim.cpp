#include "dagan/deform_sim.hpp"

#include <algorithm>
#include <cmath>

#include "dagan/error.hpp"

namespace dagan {

ElasticSpec level_spec(int level) {
  if (level < 1 || level > kMisalignmentLevels) {
    throw ArgumentError("misalignment level must be in 1..6, got " + std::to_string(level));
  }
  ElasticSpec s;
  s.control_spacing = {40, 40};
  s.magnitude_lo = static_cast<double>(level);
  s.magnitude_hi = static_cast<double>(level + 1);
  s.level_name = "NA-" + std::to_string(level);
  return s;
}

namespace {

void check_spec(const ElasticSpec& spec) {
  if (spec.control_spacing[0] < 2 || spec.control_spacing[1] < 2) {
    throw ArgumentError("control spacing must be >= 2 pixels");
  }
  if (!(spec.magnitude_lo >= 0.0) || !(spec.magnitude_hi >= spec.magnitude_lo)) {
    throw ArgumentError("magnitude range must satisfy 0 <= lo <= hi");
  }
}

// Catmull-Rom (a = -0.5) weights for taps i-1, i, i+1, i+2 at fraction t.
std::array<double, 4> cubic_weights(double t) {
  const double t2 = t * t, t3 = t2 * t;
  return {-0.5 * t3 + t2 - 0.5 * t, 1.5 * t3 - 2.5 * t2 + 1.0, -1.5 * t3 + 2.0 * t2 + 0.5 * t, 0.5 * t3 - 0.5 * t2};
}

}  // namespace

ControlGrid sample_control_grid(const ElasticSpec& spec, int height, int width, Rng& rng) {
  check_spec(spec);
  if (height < spec.control_spacing[0] || width < spec.control_spacing[1]) {
    throw ArgumentError("image " + std::to_string(height) + "x" + std::to_string(width) +
                        " is smaller than one control cell");
  }
  ControlGrid g;
  g.rows = (height + spec.control_spacing[0] - 1) / spec.control_spacing[0] + 1;
  g.cols = (width + spec.control_spacing[1] - 1) / spec.control_spacing[1] + 1;
  const std::size_t n = static_cast<std::size_t>(g.rows) * g.cols;
  g.dy.resize(n);
  g.dx.resize(n);
  const double span = spec.magnitude_hi - spec.magnitude_lo;
  auto draw = [&] {
    const double sign = uniform01(rng) < 0.5 ? -1.0 : 1.0;
    return static_cast<float>(sign * (spec.magnitude_lo + uniform01(rng) * span));
  };
  for (std::size_t i = 0; i < n; ++i) {
    g.dy[i] = draw();
    g.dx[i] = draw();
  }
  return g;
}

DeformationField2D upsample_control_grid(const ControlGrid& grid, const ElasticSpec& spec, int height, int width) {
  DeformationField2D f(height, width);
  const double bound = kBicubicOvershootBound * spec.magnitude_hi;
  auto node = [&](const std::vector<float>& v, int r, int c) {
    r = std::clamp(r, 0, grid.rows - 1);
    c = std::clamp(c, 0, grid.cols - 1);
    return static_cast<double>(v[static_cast<std::size_t>(r) * grid.cols + c]);
  };
  for (int r = 0; r < height; ++r) {
    const double u = static_cast<double>(r) / spec.control_spacing[0];
    const int i = static_cast<int>(std::floor(u));
    const auto wy = cubic_weights(u - i);
    for (int c = 0; c < width; ++c) {
      const double v = static_cast<double>(c) / spec.control_spacing[1];
      const int j = static_cast<int>(std::floor(v));
      const auto wx = cubic_weights(v - j);
      double dy = 0.0, dx = 0.0;
      for (int a = 0; a < 4; ++a) {
        for (int b = 0; b < 4; ++b) {
          const double wgt = wy[a] * wx[b];
          dy += wgt * node(grid.dy, i - 1 + a, j - 1 + b);
          dx += wgt * node(grid.dx, i - 1 + a, j - 1 + b);
        }
      }
      const std::size_t p = static_cast<std::size_t>(r) * width + c;
      f.dy[p] = static_cast<float>(std::clamp(dy, -bound, bound));
      f.dx[p] = static_cast<float>(std::clamp(dx, -bound, bound));
    }
  }
  return f;
}

DeformationField2D sample_elastic_field(const ElasticSpec& spec, int height, int width, Rng& rng) {
  const ControlGrid g = sample_control_grid(spec, height, width, rng);
  return upsample_control_grid(g, spec, height, width);
}

MisalignedPair apply_misalignment(const PairedSample& pair, const ElasticSpec& spec, Rng& rng) {
  if (!pair.source.same_shape(pair.target)) {
    throw ArgumentError("apply_misalignment: sample '" + pair.sample_id + "' has mismatched shapes");
  }
  MisalignedPair out;
  out.field = sample_elastic_field(spec, pair.target.height, pair.target.width, rng);
  out.pair.sample_id = pair.sample_id;
  out.pair.source = pair.source;
  out.pair.aligned_target = pair.target;
  out.pair.target = warp_image(pair.target, out.field);
  return out;
}

}  // namespace dagan
