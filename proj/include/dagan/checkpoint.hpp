#pragma once

// Checkpoint layout: one directory holding <network>.bin parameter blobs,
// optional optim_<name>.bin optimizer blobs and index.json describing them.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dagan/networks.hpp"
#include "dagan/optim.hpp"

namespace dagan {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

void save_tensors(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors load_tensors(const std::filesystem::path& path);

nlohmann::json model_spec_to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);

struct CheckpointInfo {
  std::int64_t step = 0;
  int epoch = 0;
  std::string config_hash;
  ModelSpec model;
};

struct NamedOptimizer {
  std::string name;
  Adam* optimizer;
};

void save_checkpoint(const std::filesystem::path& dir, DaganModel& model, const std::vector<NamedOptimizer>& optimizers,
                     const CheckpointInfo& info);
CheckpointInfo read_checkpoint_info(const std::filesystem::path& dir);
// Restores parameters (and optimizer state when given); names and shapes must match.
CheckpointInfo load_checkpoint(const std::filesystem::path& dir, DaganModel& model,
                               const std::vector<NamedOptimizer>& optimizers = {});

}  // namespace dagan
