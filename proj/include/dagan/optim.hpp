#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dagan/layers.hpp"

namespace dagan {

struct AdamConfig {
  float lr = 1e-4f;
  float beta1 = 0.5f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float weight_decay = 1e-4f;  // added to the gradient (L2 coupled)
};

// Adam over a fixed parameter list. Parameters without a gradient in a step
// are skipped entirely, including their step count and decay.
class Adam {
 public:
  Adam(nn::ParameterSet params, AdamConfig cfg);
  void step();
  void zero_grad() { params_.zero_grad(); }
  const AdamConfig& config() const { return cfg_; }
  nn::ParameterSet& parameters() { return params_; }

  // Named tensors "<param>.m", "<param>.v", "<param>.t" for checkpointing.
  std::vector<std::pair<std::string, Tensor>> state() const;
  void load_state(const std::vector<std::pair<std::string, Tensor>>& state);

 private:
  struct Slot {
    std::vector<float> m, v;
    std::int64_t t = 0;
  };
  nn::ParameterSet params_;
  AdamConfig cfg_;
  std::vector<Slot> slots_;
};

}  // namespace dagan
