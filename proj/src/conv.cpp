// Convolution and transposed convolution via im2col + GEMM.

#include <algorithm>
#include <string>
#include <vector>

#include "dagan/error.hpp"
#include "dagan/kernels/dispatch.hpp"
#include "dagan/ops.hpp"

namespace dagan::ag {
namespace {

// Upper bound on the im2col scratch buffer, in floats.
constexpr std::size_t kColumnBudget = std::size_t{1} << 22;

struct Window {
  int channels, height, width;  // image the kernel slides over
  int kernel, stride, pad;
  int out_w;                    // number of window positions per row
};

// col[(c*k + ky)*k + kx][oy*out_w + ox] for window rows [row0, row0 + rows).
void im2col(const float* img, const Window& g, int row0, int rows, float* col) {
  const int k = g.kernel;
  const std::size_t cols = static_cast<std::size_t>(rows) * g.out_w;
  for (int c = 0; c < g.channels; ++c) {
    const float* plane = img + static_cast<std::size_t>(c) * g.height * g.width;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        float* dst = col + static_cast<std::size_t>((c * k + ky) * k + kx) * cols;
        for (int oy = 0; oy < rows; ++oy) {
          const int iy = (row0 + oy) * g.stride - g.pad + ky;
          float* d = dst + static_cast<std::size_t>(oy) * g.out_w;
          if (iy < 0 || iy >= g.height) {
            std::fill(d, d + g.out_w, 0.0f);
            continue;
          }
          const float* src = plane + static_cast<std::size_t>(iy) * g.width;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            d[ox] = (ix >= 0 && ix < g.width) ? src[ix] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im(const float* col, const Window& g, int row0, int rows, float* img) {
  const int k = g.kernel;
  const std::size_t cols = static_cast<std::size_t>(rows) * g.out_w;
  for (int c = 0; c < g.channels; ++c) {
    float* plane = img + static_cast<std::size_t>(c) * g.height * g.width;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const float* src = col + static_cast<std::size_t>((c * k + ky) * k + kx) * cols;
        for (int oy = 0; oy < rows; ++oy) {
          const int iy = (row0 + oy) * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.height) continue;
          float* d = plane + static_cast<std::size_t>(iy) * g.width;
          const float* s = src + static_cast<std::size_t>(oy) * g.out_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.width) d[ix] += s[ox];
          }
        }
      }
    }
  }
}

void add_bias(Tensor& out, const Tensor& bias) {
  const Shape s = out.shape();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const float b = bias.data()[c];
      float* p = out.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) p[i] += b;
    }
}

void accumulate_bias_grad(Node* bias, const Tensor& grad) {
  if (!bias) return;
  const Shape s = grad.shape();
  float* gb = bias->grad_buffer().data();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const float* p = grad.plane(n, c);
      double acc = 0.0;
      for (std::size_t i = 0; i < s.plane(); ++i) acc += p[i];
      gb[c] += static_cast<float>(acc);
    }
}

Node* input(Node& n, std::size_t i) {
  Node* p = n.inputs[i].get();
  return (p && p->requires_grad) ? p : nullptr;
}

void check_bias(const Var& bias, int channels, const char* op) {
  if (bias.defined() && bias.value().numel() != static_cast<std::size_t>(channels)) {
    throw ArgumentError(std::string(op) + ": bias has " + std::to_string(bias.value().numel()) +
                        " entries, expected " + std::to_string(channels));
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, ConvGeometry geo) {
  const Shape xs = x.shape(), ws = weight.shape();
  if (ws.c != xs.c || ws.h != ws.w) {
    throw ArgumentError("conv2d: weight " + ws.str() + " incompatible with input " + xs.str());
  }
  check_bias(bias, ws.n, "conv2d");
  const int k = ws.h;
  const int ho = (xs.h + 2 * geo.pad - k) / geo.stride + 1;
  const int wo = (xs.w + 2 * geo.pad - k) / geo.stride + 1;
  if (ho < 1 || wo < 1) throw ArgumentError("conv2d: input " + xs.str() + " too small for kernel");
  const int kdim = xs.c * k * k;
  const int cout = ws.n;
  const Window win{xs.c, xs.h, xs.w, k, geo.stride, geo.pad, wo};
  const bool direct = k == 1 && geo.stride == 1 && geo.pad == 0;
  const int chunk = std::clamp(static_cast<int>(kColumnBudget / (static_cast<std::size_t>(kdim) * wo)), 1, ho);
  const std::size_t out_plane = static_cast<std::size_t>(ho) * wo;

  const auto& kt = kernels::active();
  Tensor out(Shape{xs.n, cout, ho, wo});
  std::vector<float> col(direct ? 0 : static_cast<std::size_t>(kdim) * chunk * wo);
  for (int n = 0; n < xs.n; ++n) {
    for (int r0 = 0; r0 < ho; r0 += chunk) {
      const int rows = std::min(chunk, ho - r0);
      const int p = rows * wo;
      const float* cp = nullptr;
      int ldc = p;
      if (direct) {
        cp = x.value().sample(n) + static_cast<std::size_t>(r0) * wo;
        ldc = static_cast<int>(out_plane);
      } else {
        im2col(x.value().sample(n), win, r0, rows, col.data());
        cp = col.data();
      }
      kt.gemm(false, false, cout, p, kdim, 1.0f, weight.value().data(), kdim, cp, ldc, 0.0f,
              out.sample(n) + static_cast<std::size_t>(r0) * wo, static_cast<int>(out_plane));
    }
  }
  if (bias.defined()) add_bias(out, bias.value());

  return make_result(std::move(out), {x, weight, bias},
                     [win, direct, chunk, kdim, cout, ho, wo, out_plane](Node& n) {
    Node* nx = input(n, 0);
    Node* nw = input(n, 1);
    Node* nb = n.inputs.size() > 2 ? input(n, 2) : nullptr;
    const Tensor& xv = n.inputs[0]->value;
    const Tensor& wv = n.inputs[1]->value;
    const auto& kt = kernels::active();
    accumulate_bias_grad(nb, n.grad);
    if (!nx && !nw) return;
    std::vector<float> col(direct ? 0 : static_cast<std::size_t>(kdim) * chunk * wo);
    std::vector<float> dcol(direct || !nx ? 0 : col.size());
    float* dw = nw ? nw->grad_buffer().data() : nullptr;
    for (int b = 0; b < xv.shape().n; ++b) {
      for (int r0 = 0; r0 < ho; r0 += chunk) {
        const int rows = std::min(chunk, ho - r0);
        const int p = rows * wo;
        const float* gy = n.grad.sample(b) + static_cast<std::size_t>(r0) * wo;
        if (nw) {
          const float* cp = nullptr;
          int ldc = p;
          if (direct) {
            cp = xv.sample(b) + static_cast<std::size_t>(r0) * wo;
            ldc = static_cast<int>(out_plane);
          } else {
            im2col(xv.sample(b), win, r0, rows, col.data());
            cp = col.data();
          }
          kt.gemm(false, true, cout, kdim, p, 1.0f, gy, static_cast<int>(out_plane), cp, ldc, 1.0f, dw, kdim);
        }
        if (nx) {
          float* gx = nx->grad_buffer().sample(b);
          if (direct) {
            kt.gemm(true, false, kdim, p, cout, 1.0f, wv.data(), kdim, gy, static_cast<int>(out_plane), 1.0f,
                    gx + static_cast<std::size_t>(r0) * wo, static_cast<int>(out_plane));
          } else {
            kt.gemm(true, false, kdim, p, cout, 1.0f, wv.data(), kdim, gy, static_cast<int>(out_plane), 0.0f,
                    dcol.data(), p);
            col2im(dcol.data(), win, r0, rows, gx);
          }
        }
      }
    }
  });
}

Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias, ConvGeometry geo, int output_pad) {
  const Shape xs = x.shape(), ws = weight.shape();
  if (ws.n != xs.c || ws.h != ws.w) {
    throw ArgumentError("conv_transpose2d: weight " + ws.str() + " incompatible with input " + xs.str());
  }
  if (output_pad < 0 || output_pad >= geo.stride) throw ArgumentError("conv_transpose2d: bad output_pad");
  const int cin = xs.c;
  const int cout = ws.c;
  check_bias(bias, cout, "conv_transpose2d");
  const int k = ws.h;
  const int ho = (xs.h - 1) * geo.stride - 2 * geo.pad + k + output_pad;
  const int wo = (xs.w - 1) * geo.stride - 2 * geo.pad + k + output_pad;
  if (ho < 1 || wo < 1) throw ArgumentError("conv_transpose2d: empty output");
  const int kk = cout * k * k;
  const int in_plane = xs.h * xs.w;
  // The kernel slides over the output image; its positions are the input pixels.
  const Window win{cout, ho, wo, k, geo.stride, geo.pad, xs.w};

  const auto& kt = kernels::active();
  Tensor out(Shape{xs.n, cout, ho, wo});
  std::vector<float> col(static_cast<std::size_t>(kk) * in_plane);
  for (int n = 0; n < xs.n; ++n) {
    kt.gemm(true, false, kk, in_plane, cin, 1.0f, weight.value().data(), kk, x.value().sample(n), in_plane,
            0.0f, col.data(), in_plane);
    col2im(col.data(), win, 0, xs.h, out.sample(n));
  }
  if (bias.defined()) add_bias(out, bias.value());

  return make_result(std::move(out), {x, weight, bias}, [win, cin, kk, in_plane, xs](Node& n) {
    Node* nx = input(n, 0);
    Node* nw = input(n, 1);
    Node* nb = n.inputs.size() > 2 ? input(n, 2) : nullptr;
    const Tensor& xv = n.inputs[0]->value;
    const Tensor& wv = n.inputs[1]->value;
    const auto& kt = kernels::active();
    accumulate_bias_grad(nb, n.grad);
    if (!nx && !nw) return;
    std::vector<float> col(static_cast<std::size_t>(kk) * in_plane);
    for (int b = 0; b < xs.n; ++b) {
      im2col(n.grad.sample(b), win, 0, xs.h, col.data());
      if (nx) {
        kt.gemm(false, false, cin, in_plane, kk, 1.0f, wv.data(), kk, col.data(), in_plane, 1.0f,
                nx->grad_buffer().sample(b), in_plane);
      }
      if (nw) {
        kt.gemm(false, true, cin, kk, in_plane, 1.0f, xv.sample(b), in_plane, col.data(), in_plane, 1.0f,
                nw->grad_buffer().data(), kk);
      }
    }
  });
}

}  // namespace dagan::ag
