#pragma once

// Backward warping ("image o phi"): output(p) = image(p + d(p)), bilinear,
// clamp-to-edge. Displacements are in pixels, stored as (dy, dx) planes.

#include <filesystem>
#include <vector>

#include "dagan/imaging.hpp"
#include "dagan/tensor.hpp"

namespace dagan {

struct DeformationField2D {
  int height = 0;
  int width = 0;
  std::vector<float> dy;
  std::vector<float> dx;

  DeformationField2D() = default;
  DeformationField2D(int h, int w)
      : height(h), width(w), dy(static_cast<std::size_t>(h) * w, 0.0f), dx(static_cast<std::size_t>(h) * w, 0.0f) {}

  static DeformationField2D constant(int h, int w, float dy, float dx);

  std::size_t size() const { return dy.size(); }
  float max_abs() const;
  bool all_finite() const;

  // [1,2,H,W] with channel 0 = dy, channel 1 = dx.
  Tensor to_tensor() const;
  static DeformationField2D from_tensor(const Tensor& t, int n = 0);
};

Image2D warp_image(const Image2D& image, const DeformationField2D& field);

// warp_image(warp_image(image, first), second): two resamplings, first field
// applied first.
Image2D chain_warp(const Image2D& image, const DeformationField2D& first, const DeformationField2D& second);

// Per-pixel Jacobian of the displacement, forward differences with a zero
// trailing row/column.
struct DisplacementGradient {
  float ddy_dy = 0, ddy_dx = 0;
  float ddx_dy = 0, ddx_dx = 0;
};

struct FieldGradient {
  int height = 0;
  int width = 0;
  std::vector<DisplacementGradient> at;
};

FieldGradient spatial_gradient(const DeformationField2D& field);

// Single field equivalent to applying `first` then `second` with chain_warp:
// d(p) = second(p) + first(p + second(p)), first sampled bilinearly. Exact
// for constant fields; a test utility, not used on the training path.
DeformationField2D compose_fields(const DeformationField2D& first, const DeformationField2D& second);

// Row-major float32, dy plane then dx plane, sidecar {height, width, planes: 2}.
void save_field(const std::filesystem::path& path, const DeformationField2D& field);
DeformationField2D load_field(const std::filesystem::path& path);

}  // namespace dagan
