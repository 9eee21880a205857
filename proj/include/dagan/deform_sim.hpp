#pragma once

// Graded elastic misalignment: random offsets on a coarse control grid,
// upsampled bicubically to a dense displacement field.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dagan/imaging.hpp"
#include "dagan/rng.hpp"
#include "dagan/warp.hpp"

namespace dagan {

struct ElasticSpec {
  std::array<int, 2> control_spacing{40, 40};  // (rows, cols) in pixels
  double magnitude_lo = 0.0;
  double magnitude_hi = 0.0;
  std::string level_name;
  std::uint64_t seed = 0;
};

inline constexpr int kMisalignmentLevels = 6;

// Upper bound on |dense displacement component| / magnitude_hi. Catmull-Rom
// weights can overshoot the node values (up to 1.25^2 in 2-D), so the dense
// field is clamped to this bound.
inline constexpr double kBicubicOvershootBound = 1.5;

// NA-1 .. NA-6.
ElasticSpec level_spec(int level);

struct ControlGrid {
  int rows = 0;
  int cols = 0;
  std::vector<float> dy;
  std::vector<float> dx;
};

// ceil(H/s)+1 x ceil(W/s)+1 nodes; each node/axis gets sign * U(lo, hi).
ControlGrid sample_control_grid(const ElasticSpec& spec, int height, int width, Rng& rng);

// Catmull-Rom interpolation of node offsets onto the pixel grid; node k sits at
// pixel k * spacing.
DeformationField2D upsample_control_grid(const ControlGrid& grid, const ElasticSpec& spec, int height, int width);

DeformationField2D sample_elastic_field(const ElasticSpec& spec, int height, int width, Rng& rng);

struct MisalignedPair {
  PairedSample pair;
  DeformationField2D field;
};

// target := target o field, aligned_target := original target; source untouched.
MisalignedPair apply_misalignment(const PairedSample& pair, const ElasticSpec& spec, Rng& rng);

}  // namespace dagan
