#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "dagan/imaging.hpp"
#include "dagan/rng.hpp"
#include "dagan/tensor.hpp"

namespace testing {

inline std::vector<float> random_values(std::size_t n, dagan::Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(lo + (hi - lo) * dagan::uniform01(rng));
  return v;
}

inline dagan::Tensor random_tensor(dagan::Shape s, dagan::Rng& rng, double lo = -1.0, double hi = 1.0) {
  return dagan::Tensor(s, random_values(s.numel(), rng, lo, hi));
}

inline dagan::Image2D random_image(int h, int w, dagan::Rng& rng) {
  return dagan::Image2D(h, w, random_values(static_cast<std::size_t>(h) * w, rng));
}

// Smooth blob on a -1 background, strictly inside the frame.
inline dagan::Image2D blob_image(int h, int w, int margin = 4) {
  dagan::Image2D im(h, w, -1.0f);
  for (int r = margin; r < h - margin; ++r)
    for (int c = margin; c < w - margin; ++c)
      im.at(r, c) = static_cast<float>(0.5 * std::sin(0.4 * r) * std::cos(0.3 * c) + 0.2);
  return im;
}

inline double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("dagan_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testing
