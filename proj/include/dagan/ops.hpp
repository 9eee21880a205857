#pragma once

// Differentiable tensor operations used by the networks and losses.

#include "dagan/autograd.hpp"

namespace dagan::ag {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var scale(const Var& a, float s);
Var add_scalar(const Var& a, float s);
// Sum of scalar (1-element) vars with per-term weights.
Var weighted_sum(const std::vector<Var>& terms, const std::vector<float>& weights);

Var relu(const Var& x);
Var leaky_relu(const Var& x, float slope);
Var tanh(const Var& x);
Var clamp(const Var& x, float lo, float hi);

struct ConvGeometry {
  int stride = 1;
  int pad = 0;  // zero padding on every side
};

// x [N,Cin,H,W], weight [Cout,Cin,k,k], bias [1,Cout,1,1] or undefined.
Var conv2d(const Var& x, const Var& weight, const Var& bias, ConvGeometry g);
// x [N,Cin,H,W], weight [Cin,Cout,k,k]; output side (H-1)*stride - 2*pad + k + output_pad.
Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias, ConvGeometry g,
                     int output_pad);

Var reflect_pad(const Var& x, int top, int bottom, int left, int right);
Var reflect_pad(const Var& x, int pad);
Var crop(const Var& x, int top, int left, int height, int width);

// Per-sample, per-channel normalisation without affine parameters.
Var instance_norm(const Var& x, float eps = 1e-5f);

Var concat_channels(const Var& a, const Var& b);
Var max_pool2(const Var& x);
Var upsample_nearest2(const Var& x);

// Bilinear backward warp with clamp-to-edge sampling. image [N,C,H,W],
// field [N,2,H,W] holding (dy, dx) in pixels.
Var warp(const Var& image, const Var& field);

Var mean(const Var& x);
// mean |a - b| over all elements.
Var l1_mean(const Var& a, const Var& b);
// Sum over the four gradient planes (d/dy, d/dx of dy and dx) of the mean
// squared forward difference; trailing row/column difference is zero.
Var gradient_energy(const Var& field);
// mean over elements of BCE(sigmoid(logit), target), computed stably.
Var bce_with_logits(const Var& logits, float target);
// mean over elements of log(1 - sigmoid(logit)), the saturating generator form.
Var log_one_minus_sigmoid(const Var& logits);

}  // namespace dagan::ag
