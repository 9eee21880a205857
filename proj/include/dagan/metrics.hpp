#pragma once

// Masked image-quality metrics. 2-D metrics work in normalised units, 3-D
// metrics in physical units.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dagan/imaging.hpp"

namespace dagan {

inline constexpr double kPsnrCap = 100.0;

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

// mean |pred - ref| over mask / (max - min of ref over mask).
double nmae(const Image2D& pred, const Image2D& ref, const Mask& mask);
// +inf when the masked MSE is zero.
double psnr(const Image2D& pred, const Image2D& ref, const Mask& mask, double data_range = 2.0);
// Gaussian-window SSIM averaged over full windows whose centre lies in the mask.
double ssim(const Image2D& pred, const Image2D& ref, const Mask& mask, double data_range = 2.0,
            const SsimParams& params = {});

struct Volume {
  int depth = 0;
  int height = 0;
  int width = 0;
  std::vector<float> values;  // physical units, slice-major
  // Denormalises each slice with its own scale; slices must share a shape.
  static Volume stack(const std::vector<Image2D>& slices);
  float at(int z, int r, int c) const {
    return values[(static_cast<std::size_t>(z) * height + r) * width + c];
  }
};

struct VolumeMask {
  int depth = 0;
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> on;
  static VolumeMask stack(const std::vector<Mask>& slices);
  std::size_t count() const;
};

double mae3d(const Volume& pred, const Volume& ref, const VolumeMask& mask);
double psnr3d(const Volume& pred, const Volume& ref, const VolumeMask& mask, double data_range);
// Window depth is clipped to the volume depth.
double ssim3d(const Volume& pred, const Volume& ref, const VolumeMask& mask, double data_range,
              const SsimParams& params = {});

double dice(const Mask& a, const Mask& b);

// ------------------------------------------------------------------ reports

struct MetricsConfig {
  double data_range = 2.0;
  float background_level = kDefaultBackgroundLevel;
  float background_tolerance = kDefaultBackgroundTolerance;
};

struct EvalItem {
  std::string id;
  Image2D pred;
  Image2D ref;
  std::optional<std::string> subject;
  std::optional<int> slice;
};

struct SampleMetrics {
  std::string id;
  double nmae = 0, psnr = 0, ssim = 0;
  std::size_t foreground = 0;
};

struct VolumeMetrics {
  std::string subject;
  int slices = 0;
  double mae3d = 0, psnr3d = 0, ssim3d = 0;
};

struct MetricSummary {
  double mean = 0;
  double std = 0;  // sample standard deviation, 0 for a single value
  std::size_t n = 0;
};

MetricSummary summarize(const std::vector<double>& values);

struct MetricsReport {
  MetricsConfig config;
  std::vector<SampleMetrics> samples;
  std::vector<VolumeMetrics> volumes;
  std::map<std::string, MetricSummary> aggregate;  // PSNR values capped at kPsnrCap
};

MetricsReport evaluate(const std::vector<EvalItem>& items, const MetricsConfig& cfg = {});
void write_metrics_csv(const MetricsReport& report, const std::filesystem::path& path);
void write_summary_json(const MetricsReport& report, const std::filesystem::path& path);

struct PairedTTest {
  double mean_diff = 0;
  double t = 0;
  int df = 0;
  double p_value = 1;  // two-sided
};
PairedTTest paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace dagan
