#pragma once

// Experiment configuration: INI sections [data], [model], [loss_weights],
// [train], [simulate], [eval]. Every key has a default; later sources win:
// defaults < preset < file < overrides.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dagan/deform_sim.hpp"
#include "dagan/metrics.hpp"
#include "dagan/training.hpp"

namespace dagan {

struct DataConfig {
  std::string manifest;
  std::string validation_manifest;
  int validation_count = 8;  // held out from the end of manifest when no validation_manifest
};

struct SimulateConfig {
  int level = 3;
  std::uint64_t seed = 0;
  std::array<int, 2> control_spacing{40, 40};
};

struct ExperimentConfig {
  DataConfig data;
  std::string model_size = "full";  // full | toy
  TrainConfig train;
  SimulateConfig simulate;
  MetricsConfig eval;

  // Fully materialised INI text.
  std::string resolved() const;
};

// "section.key=value"
struct Override {
  std::string key;
  std::string value;
};
Override parse_override(const std::string& text);

// Missing file -> ConfigError. An empty path yields pure defaults.
ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<Override>& overrides = {});
ExperimentConfig config_from_string(const std::string& ini, const std::vector<Override>& overrides = {});

}  // namespace dagan
