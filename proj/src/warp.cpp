#include "dagan/warp.hpp"

#include <algorithm>
#include <cmath>

#include "dagan/error.hpp"
#include "dagan/io.hpp"
#include "dagan/kernels/dispatch.hpp"

namespace dagan {

DeformationField2D DeformationField2D::constant(int h, int w, float dy_value, float dx_value) {
  DeformationField2D f(h, w);
  std::fill(f.dy.begin(), f.dy.end(), dy_value);
  std::fill(f.dx.begin(), f.dx.end(), dx_value);
  return f;
}

float DeformationField2D::max_abs() const {
  float m = 0.0f;
  for (float v : dy) m = std::max(m, std::abs(v));
  for (float v : dx) m = std::max(m, std::abs(v));
  return m;
}

bool DeformationField2D::all_finite() const {
  return std::all_of(dy.begin(), dy.end(), [](float v) { return std::isfinite(v); }) &&
         std::all_of(dx.begin(), dx.end(), [](float v) { return std::isfinite(v); });
}

Tensor DeformationField2D::to_tensor() const {
  Tensor t(Shape{1, 2, height, width});
  std::copy(dy.begin(), dy.end(), t.plane(0, 0));
  std::copy(dx.begin(), dx.end(), t.plane(0, 1));
  return t;
}

DeformationField2D DeformationField2D::from_tensor(const Tensor& t, int n) {
  const Shape s = t.shape();
  if (s.c != 2) throw ArgumentError("field tensor needs 2 channels, got " + s.str());
  DeformationField2D f(s.h, s.w);
  std::copy_n(t.plane(n, 0), s.plane(), f.dy.begin());
  std::copy_n(t.plane(n, 1), s.plane(), f.dx.begin());
  return f;
}

namespace {

void check_field(const Image2D& image, const DeformationField2D& field, const char* op) {
  if (image.height != field.height || image.width != field.width) {
    throw ArgumentError(std::string(op) + ": image " + std::to_string(image.height) + "x" +
                        std::to_string(image.width) + " vs field " + std::to_string(field.height) + "x" +
                        std::to_string(field.width));
  }
  if (!field.all_finite()) throw ArgumentError(std::string(op) + ": field has non-finite values");
}

std::vector<float> interleave(const DeformationField2D& f) {
  std::vector<float> planes(2 * f.size());
  std::copy(f.dy.begin(), f.dy.end(), planes.begin());
  std::copy(f.dx.begin(), f.dx.end(), planes.begin() + static_cast<std::ptrdiff_t>(f.size()));
  return planes;
}

}  // namespace

Image2D warp_image(const Image2D& image, const DeformationField2D& field) {
  check_field(image, field, "warp_image");
  Image2D out(image.height, image.width);
  out.scale = image.scale;
  const auto planes = interleave(field);
  kernels::active().warp_forward(image.values.data(), 1, image.height, image.width, planes.data(),
                                 out.values.data());
  return out;
}

Image2D chain_warp(const Image2D& image, const DeformationField2D& first, const DeformationField2D& second) {
  check_field(image, first, "chain_warp");
  check_field(image, second, "chain_warp");
  return warp_image(warp_image(image, first), second);
}

FieldGradient spatial_gradient(const DeformationField2D& field) {
  if (field.height < 2 || field.width < 2) {
    throw ArgumentError("spatial_gradient: field must be at least 2x2");
  }
  const int h = field.height, w = field.width;
  FieldGradient g{h, w, std::vector<DisplacementGradient>(field.size())};
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const std::size_t p = static_cast<std::size_t>(r) * w + c;
      auto& d = g.at[p];
      if (r + 1 < h) {
        d.ddy_dy = field.dy[p + w] - field.dy[p];
        d.ddx_dy = field.dx[p + w] - field.dx[p];
      }
      if (c + 1 < w) {
        d.ddy_dx = field.dy[p + 1] - field.dy[p];
        d.ddx_dx = field.dx[p + 1] - field.dx[p];
      }
    }
  }
  return g;
}

DeformationField2D compose_fields(const DeformationField2D& first, const DeformationField2D& second) {
  if (first.height != second.height || first.width != second.width) {
    throw ArgumentError("compose_fields: shape mismatch");
  }
  const auto planes = interleave(first);
  std::vector<float> sampled(planes.size());
  kernels::reference::warp_forward<float>(planes.data(), 2, first.height, first.width, interleave(second).data(),
                                          sampled.data());
  DeformationField2D out(first.height, first.width);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.dy[i] = second.dy[i] + sampled[i];
    out.dx[i] = second.dx[i] + sampled[out.size() + i];
  }
  return out;
}

void save_field(const std::filesystem::path& path, const DeformationField2D& field) {
  io::Grid g{field.height, field.width, 2, interleave(field)};
  io::write_grid(path, g);
}

DeformationField2D load_field(const std::filesystem::path& path) {
  const io::Grid g = io::read_grid(path);
  if (g.planes != 2) throw LoadError("field file '" + path.string() + "' must hold 2 planes");
  DeformationField2D f(g.height, g.width);
  std::copy_n(g.values.begin(), f.size(), f.dy.begin());
  std::copy_n(g.values.begin() + static_cast<std::ptrdiff_t>(f.size()), f.size(), f.dx.begin());
  return f;
}

}  // namespace dagan
