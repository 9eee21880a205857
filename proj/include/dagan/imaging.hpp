#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dagan/tensor.hpp"

namespace dagan {

// Affine map between physical units and the normalised [-1, 1] range.
struct IntensityScale {
  double lo_phys = -1.0;
  double hi_phys = 1.0;

  double to_physical(float normalized) const {
    return lo_phys + (static_cast<double>(normalized) + 1.0) * 0.5 * (hi_phys - lo_phys);
  }
  float to_normalized(double physical) const {
    return static_cast<float>(2.0 * (physical - lo_phys) / (hi_phys - lo_phys) - 1.0);
  }
};

// Single-channel image, row-major.
struct Image2D {
  int height = 0;
  int width = 0;
  std::vector<float> values;
  IntensityScale scale;

  Image2D() = default;
  Image2D(int h, int w, float fill = 0.0f) : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}
  Image2D(int h, int w, std::vector<float> v);

  std::size_t size() const { return values.size(); }
  float& at(int r, int c) { return values[static_cast<std::size_t>(r) * width + c]; }
  float at(int r, int c) const { return values[static_cast<std::size_t>(r) * width + c]; }
  bool same_shape(const Image2D& o) const { return height == o.height && width == o.width; }

  // [1,1,H,W]
  Tensor to_tensor() const;
  static Image2D from_tensor(const Tensor& t, int n = 0, int c = 0);
};

// Dataset-level checks: at least 8x8 and finite.
void validate_image(const Image2D& image, const std::string& what);

struct PairedSample {
  Image2D source;                         // modality X
  Image2D target;                         // modality Y, possibly misaligned
  std::optional<Image2D> aligned_target;  // ground truth, simulated/evaluation data only
  std::string sample_id;
};

enum class Split { train, test };

struct PairRecord {
  std::string id;
  std::filesystem::path source;
  std::filesystem::path target;
  std::optional<std::filesystem::path> aligned_target;
  // Optional volume grouping for 3-D metrics.
  std::optional<std::string> subject;
  std::optional<int> slice;
};

struct DatasetManifest {
  std::array<std::string, 2> modality_names{"source", "target"};
  std::map<std::string, IntensityScale> normalization;
  std::vector<PairRecord> pairs;
  Split split = Split::train;
  std::filesystem::path root;  // relative paths resolve against this

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
  const IntensityScale& scale_for(int modality) const;
  std::filesystem::path resolve(const std::filesystem::path& p) const;

  // Decodes and normalises one pair; validates shapes against the sample id.
  PairedSample load_pair(std::size_t index) const;
};

// Parses, checks that every referenced file exists, and verifies pair shapes
// from file headers.
DatasetManifest load_dataset(const std::filesystem::path& manifest_path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& manifest_path);

// Maps lo_phys -> -1 and hi_phys -> +1, clamping outside values.
Image2D normalize(int height, int width, const std::vector<float>& raw, double lo_phys, double hi_phys);
std::vector<float> denormalize(const Image2D& image);

struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> on;

  std::size_t count() const;
  bool at(int r, int c) const { return on[static_cast<std::size_t>(r) * width + c] != 0; }
};

inline constexpr float kDefaultBackgroundLevel = -1.0f;
inline constexpr float kDefaultBackgroundTolerance = 1e-3f;

// True where |reference - background_level| > tolerance. Always computed on
// the reference image so every prediction is scored on the same pixels.
Mask foreground_mask(const Image2D& reference, float background_level = kDefaultBackgroundLevel,
                     float tolerance = kDefaultBackgroundTolerance);

// Deterministic per-epoch permutation of [0, count).
std::vector<std::size_t> epoch_order(std::size_t count, std::uint64_t seed, int epoch);

}  // namespace dagan
