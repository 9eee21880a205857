#include "dagan/layers.hpp"

#include <cmath>
#include <cstring>
#include <numbers>

namespace dagan::nn {

void ParameterSet::add(std::string name, ag::Var var) { params_.push_back({std::move(name), std::move(var)}); }

std::int64_t ParameterSet::count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += static_cast<std::int64_t>(p.var.value().numel());
  return n;
}

void ParameterSet::set_requires_grad(bool on) {
  for (auto& p : params_) p.var.set_requires_grad(on);
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

std::uint64_t ParameterSet::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& p : params_) {
    mix(p.name.data(), p.name.size());
    mix(p.var.value().data(), p.var.value().numel() * sizeof(float));
  }
  return h;
}

double ParameterSet::grad_norm() const {
  double s = 0.0;
  for (const auto& p : params_) {
    if (!p.var.has_grad()) continue;
    for (float g : p.var.grad().values()) s += static_cast<double>(g) * g;
  }
  return std::sqrt(s);
}

void fill_normal(Tensor& t, Rng& rng, double stddev) {
  float* d = t.data();
  const std::size_t n = t.numel();
  for (std::size_t i = 0; i < n; i += 2) {
    double u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    if (u1 < 1e-300) u1 = 1e-300;
    const double r = std::sqrt(-2.0 * std::log(u1)) * stddev;
    d[i] = static_cast<float>(r * std::cos(2.0 * std::numbers::pi * u2));
    if (i + 1 < n) d[i + 1] = static_cast<float>(r * std::sin(2.0 * std::numbers::pi * u2));
  }
}

namespace {

ag::Var make_weight(Shape s, double init_std, Rng& rng) {
  Tensor w(s, 0.0f);
  if (init_std > 0.0) fill_normal(w, rng, init_std);
  return ag::leaf(std::move(w));
}

}  // namespace

Conv2d make_conv(ParameterSet& params, const std::string& name, int in, int out, int kernel,
                 ConvOptions opt, Rng& rng) {
  Conv2d c;
  c.weight = make_weight({out, in, kernel, kernel}, opt.init_std, rng);
  params.add(name + ".weight", c.weight);
  if (opt.bias) {
    c.bias = ag::leaf(Tensor({1, out, 1, 1}, 0.0f));
    params.add(name + ".bias", c.bias);
  }
  c.geometry = {opt.stride, opt.pad};
  return c;
}

ConvTranspose2d make_conv_transpose(ParameterSet& params, const std::string& name, int in, int out,
                                    int kernel, ConvOptions opt, int output_pad, Rng& rng) {
  ConvTranspose2d c;
  c.weight = make_weight({in, out, kernel, kernel}, opt.init_std, rng);
  params.add(name + ".weight", c.weight);
  if (opt.bias) {
    c.bias = ag::leaf(Tensor({1, out, 1, 1}, 0.0f));
    params.add(name + ".bias", c.bias);
  }
  c.geometry = {opt.stride, opt.pad};
  c.output_pad = output_pad;
  return c;
}

}  // namespace dagan::nn
