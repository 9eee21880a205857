#pragma once

// Modality generators, transformation regressors grouped into symmetric
// aligners, and patch discriminators.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dagan/imaging.hpp"
#include "dagan/layers.hpp"
#include "dagan/warp.hpp"

namespace dagan {

enum class Domain { x, y };
const char* domain_name(Domain d);

struct GeneratorSpec {
  int in_channels = 1;
  int base_width = 64;
  int n_residual_blocks = 9;
  int n_downsampling = 2;
  std::string plan() const;
};

struct RegressorSpec {
  int in_channels = 2;  // (moving, fixed)
  int base_width = 32;
  int width = 64;
  int levels = 6;  // pooling stages; inputs are reflect-padded to multiples of 2^levels
  int bottleneck_blocks = 3;
  std::string plan() const;
};

struct DiscriminatorSpec {
  int in_channels = 1;
  int base_width = 64;
  int n_blocks = 4;
  int max_width = 512;
  float slope = 0.2f;
  std::string plan() const;
};

class Generator {
 public:
  Generator(const GeneratorSpec& spec, Rng& rng);
  // x [N,1,H,W] -> [N,1,H,W] in [-1, 1]; H, W divisible by 2^n_downsampling.
  ag::Var operator()(const ag::Var& x) const;
  Image2D operator()(const Image2D& image) const;
  const GeneratorSpec& spec() const { return spec_; }
  nn::ParameterSet& parameters() { return params_; }
  const nn::ParameterSet& parameters() const { return params_; }

 private:
  struct ResBlock {
    nn::Conv2d a, b;
  };
  GeneratorSpec spec_;
  nn::ParameterSet params_;
  nn::Conv2d stem_;
  std::vector<nn::Conv2d> down_;
  std::vector<ResBlock> blocks_;
  std::vector<nn::ConvTranspose2d> up_;
  nn::Conv2d head_;
};

class Regressor {
 public:
  Regressor(const RegressorSpec& spec, Rng& rng);
  // moving, fixed [N,1,H,W] -> displacement [N,2,H,W] that warps moving onto fixed.
  ag::Var operator()(const ag::Var& moving, const ag::Var& fixed) const;
  DeformationField2D operator()(const Image2D& moving, const Image2D& fixed) const;
  const RegressorSpec& spec() const { return spec_; }
  nn::ParameterSet& parameters() { return params_; }
  const nn::ParameterSet& parameters() const { return params_; }

 private:
  struct ResBlock {
    nn::Conv2d a, b;
  };
  struct Stage {
    nn::Conv2d conv;
    ResBlock res;
  };
  ag::Var res_forward(const ResBlock& r, const ag::Var& x) const;
  ag::Var stage_forward(const Stage& s, const ag::Var& x) const;
  RegressorSpec spec_;
  nn::ParameterSet params_;
  std::vector<Stage> encoder_;
  std::vector<ResBlock> bottleneck_;
  std::vector<Stage> decoder_;
  ResBlock refine_;
  nn::Conv2d refine_proj_;
  nn::Conv2d out_;
};

class Discriminator {
 public:
  Discriminator(const DiscriminatorSpec& spec, Domain domain, Rng& rng);
  // [N,1,H,W] -> patch logits [N,1,H/2^n,W/2^n].
  ag::Var operator()(const ag::Var& x) const;
  Domain domain() const { return domain_; }
  const DiscriminatorSpec& spec() const { return spec_; }
  nn::ParameterSet& parameters() { return params_; }
  const nn::ParameterSet& parameters() const { return params_; }

 private:
  DiscriminatorSpec spec_;
  Domain domain_;
  nn::ParameterSet params_;
  std::vector<nn::Conv2d> blocks_;
  nn::Conv2d head_;
};

struct SymmetricAligner {
  Regressor forward;
  Regressor backward;
};

struct ModelSpec {
  GeneratorSpec generator;
  RegressorSpec regressor;
  DiscriminatorSpec discriminator;
  bool aligners = true;
  static ModelSpec full();
  // Reduced widths for desk-scale runs at 64x64.
  static ModelSpec toy();
};

struct NamedNetwork {
  std::string name;
  nn::ParameterSet* params;
};

class DaganModel {
 public:
  DaganModel(const ModelSpec& spec, std::uint64_t seed);
  DaganModel(const DaganModel&) = delete;
  DaganModel& operator=(const DaganModel&) = delete;

  const ModelSpec& spec() const { return spec_; }
  bool has_aligners() const { return a_y.has_value(); }

  // G, F, D_y, D_x and, when present, R_y_fwd, R_y_bwd, R_x_fwd, R_x_bwd.
  std::vector<NamedNetwork> networks();
  // Union of G, F and regressor parameters.
  nn::ParameterSet generator_side();
  nn::ParameterSet discriminator_side();

  Generator g;  // x -> y
  Generator f;  // y -> x
  std::optional<SymmetricAligner> a_y;
  std::optional<SymmetricAligner> a_x;
  Discriminator d_y;
  Discriminator d_x;

 private:
  ModelSpec spec_;
};

std::int64_t count_parameters(const nn::ParameterSet& params);
std::int64_t model_size_bytes(const nn::ParameterSet& params);

}  // namespace dagan
