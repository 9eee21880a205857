#pragma once

// Parameter containers and the convolution layers the architectures are built from.

#include <cstdint>
#include <string>
#include <vector>

#include "dagan/autograd.hpp"
#include "dagan/ops.hpp"
#include "dagan/rng.hpp"

namespace dagan::nn {

struct NamedParameter {
  std::string name;
  ag::Var var;
};

class ParameterSet {
 public:
  void add(std::string name, ag::Var var);
  std::size_t size() const { return params_.size(); }
  const std::vector<NamedParameter>& items() const { return params_; }
  std::vector<NamedParameter>& items() { return params_; }
  std::int64_t count() const;
  void set_requires_grad(bool on);
  void zero_grad();
  // FNV-1a over names and raw float bits.
  std::uint64_t hash() const;
  double grad_norm() const;

 private:
  std::vector<NamedParameter> params_;
};

// Gaussian samples via Box-Muller over uniform01, identical on every platform.
void fill_normal(Tensor& t, Rng& rng, double stddev);

struct Conv2d {
  ag::Var weight;  // [Cout, Cin, k, k]
  ag::Var bias;    // [1, Cout, 1, 1] or undefined
  ag::ConvGeometry geometry;
  ag::Var operator()(const ag::Var& x) const { return ag::conv2d(x, weight, bias, geometry); }
};

struct ConvTranspose2d {
  ag::Var weight;  // [Cin, Cout, k, k]
  ag::Var bias;
  ag::ConvGeometry geometry;
  int output_pad = 0;
  ag::Var operator()(const ag::Var& x) const {
    return ag::conv_transpose2d(x, weight, bias, geometry, output_pad);
  }
};

struct ConvOptions {
  int stride = 1;
  int pad = 0;
  bool bias = true;
  double init_std = 0.02;  // 0 -> zero initialised
};

Conv2d make_conv(ParameterSet& params, const std::string& name, int in, int out, int kernel,
                 ConvOptions opt, Rng& rng);
ConvTranspose2d make_conv_transpose(ParameterSet& params, const std::string& name, int in, int out,
                                    int kernel, ConvOptions opt, int output_pad, Rng& rng);

}  // namespace dagan::nn
