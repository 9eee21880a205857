#include "dagan/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "dagan/error.hpp"
#include "dagan/kernels/dispatch.hpp"

namespace dagan::ag {
namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ArgumentError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                        b.shape().str());
  }
}

void require_scalar(const Var& a, const char* op) {
  if (a.value().numel() != 1) {
    throw ArgumentError(std::string(op) + ": expected a single-element tensor, got " + a.shape().str());
  }
}

Node* input(Node& n, std::size_t i) {
  Node* p = n.inputs[i].get();
  return (p && p->requires_grad) ? p : nullptr;
}

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  const float* pb = b.value().data();
  float* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] += pb[i];
  return make_result(std::move(out), {a, b}, [](Node& n) {
    if (Node* ia = input(n, 0)) ia->accumulate(n.grad);
    if (Node* ib = input(n, 1)) ib->accumulate(n.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  const float* pb = b.value().data();
  float* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] -= pb[i];
  return make_result(std::move(out), {a, b}, [](Node& n) {
    if (Node* ia = input(n, 0)) ia->accumulate(n.grad);
    if (Node* ib = input(n, 1)) {
      Tensor& g = ib->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g.data()[i] -= n.grad.data()[i];
    }
  });
}

Var scale(const Var& a, float s) {
  Tensor out = a.value();
  for (auto& v : out.values()) v *= s;
  return make_result(std::move(out), {a}, [s](Node& n) {
    if (Node* ia = input(n, 0)) {
      Tensor& g = ia->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g.data()[i] += s * n.grad.data()[i];
    }
  });
}

Var add_scalar(const Var& a, float s) {
  Tensor out = a.value();
  for (auto& v : out.values()) v += s;
  return make_result(std::move(out), {a}, [](Node& n) {
    if (Node* ia = input(n, 0)) ia->accumulate(n.grad);
  });
}

Var weighted_sum(const std::vector<Var>& terms, const std::vector<float>& weights) {
  if (terms.size() != weights.size()) throw ArgumentError("weighted_sum: terms/weights size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    require_scalar(terms[i], "weighted_sum");
    total += static_cast<double>(weights[i]) * terms[i].item();
  }
  return make_result(Tensor::scalar(static_cast<float>(total)), terms, [weights](Node& n) {
    const float g = n.grad.item();
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (Node* in = input(n, i)) in->accumulate(Tensor::scalar(g * weights[i]));
    }
  });
}

Var relu(const Var& x) { return leaky_relu(x, 0.0f); }

Var leaky_relu(const Var& x, float slope) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = v > 0.0f ? v : slope * v;
  return make_result(std::move(out), {x}, [slope](Node& n) {
    Node* in = input(n, 0);
    if (!in) return;
    Tensor& g = in->grad_buffer();
    const float* xv = in->value.data();
    for (std::size_t i = 0; i < g.numel(); ++i) {
      g.data()[i] += xv[i] > 0.0f ? n.grad.data()[i] : slope * n.grad.data()[i];
    }
  });
}

Var tanh(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = std::tanh(v);
  return make_result(std::move(out), {x}, [](Node& n) {
    Node* in = input(n, 0);
    if (!in) return;
    Tensor& g = in->grad_buffer();
    const float* y = n.value.data();
    for (std::size_t i = 0; i < g.numel(); ++i) g.data()[i] += n.grad.data()[i] * (1.0f - y[i] * y[i]);
  });
}

Var clamp(const Var& x, float lo, float hi) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = std::clamp(v, lo, hi);
  return make_result(std::move(out), {x}, [lo, hi](Node& n) {
    Node* in = input(n, 0);
    if (!in) return;
    Tensor& g = in->grad_buffer();
    const float* xv = in->value.data();
    for (std::size_t i = 0; i < g.numel(); ++i) {
      if (xv[i] >= lo && xv[i] <= hi) g.data()[i] += n.grad.data()[i];
    }
  });
}

Var reflect_pad(const Var& x, int pad) { return reflect_pad(x, pad, pad, pad, pad); }

Var reflect_pad(const Var& x, int top, int bottom, int left, int right) {
  const Shape s = x.shape();
  if (top < 0 || bottom < 0 || left < 0 || right < 0) throw ArgumentError("reflect_pad: negative pad");
  if (std::max(top, bottom) >= s.h && s.h > 1) throw ArgumentError("reflect_pad: pad exceeds height");
  if (std::max(left, right) >= s.w && s.w > 1) throw ArgumentError("reflect_pad: pad exceeds width");
  const Shape os{s.n, s.c, s.h + top + bottom, s.w + left + right};
  Tensor out(os);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const float* src = x.value().plane(n, c);
      float* dst = out.plane(n, c);
      for (int y = 0; y < os.h; ++y) {
        const int sy = reflect_index(y - top, s.h);
        for (int q = 0; q < os.w; ++q) dst[y * os.w + q] = src[sy * s.w + reflect_index(q - left, s.w)];
      }
    }
  }
  return make_result(std::move(out), {x}, [s, os, top, left](Node& n) {
    Node* in = input(n, 0);
    if (!in) return;
    Tensor& g = in->grad_buffer();
    for (int b = 0; b < s.n; ++b) {
      for (int c = 0; c < s.c; ++c) {
        const float* go = n.grad.plane(b, c);
        float* gi = g.plane(b, c);
        for (int y = 0; y < os.h; ++y) {
          const int sy = reflect_index(y - top, s.h);
          for (int q = 0; q < os.w; ++q) gi[sy * s.w + reflect_index(q - left, s.w)] += go[y * os.w + q];
        }
      }
    }
  });
}

Var crop(const Var& x, int top, int left, int height, int width) {
  const Shape s = x.shape();
  if (top < 0 || left < 0 || height < 1 || width < 1 || top + height > s.h || left + width > s.w) {
    throw ArgumentError("crop: window outside tensor " + s.str());
  }
  const Shape os{s.n, s.c, height, width};
  Tensor out(os);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < height; ++y)
        std::copy_n(x.value().plane(n, c) + (top + y) * s.w + left, width, out.plane(n, c) + y * width);
  return make_result(std::move(out), {x}, [s, os, top, left](Node& n) {
    Node* in = input(n, 0);
    if (!in) return;
    Tensor& g = in->grad_buffer();
    for (int b = 0; b < s.n; ++b)
      for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < os.h; ++y) {
          const float* go = n.grad.plane(b, c) + y * os.w;
          float* gi = g.plane(b, c) + (top + y) * s.w + left;
          for (int q = 0; q < os.w; ++q) gi[q] += go[q];
        }
  });
}

Var instance_norm(const Var& x, float eps) {
  const Shape s = x.shape();
  const std::size_t hw = s.plane();
  Tensor out(s);
  std::vector<float> inv_std(static_cast<std::size_t>(s.n) * s.c);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const float* src = x.value().plane(n, c);
      double mu = 0.0;
      for (std::size_t i = 0; i < hw; ++i) mu += src[i];
      mu /= static_cast<double>(hw);
      double var = 0.0;
      for (std::size_t i = 0; i < hw; ++i) var += (src[i] - mu) * (src[i] - mu);
      var /= static_cast<double>(hw);
      const float is = static_cast<float>(1.0 / std::sqrt(var + eps));
      inv_std[static_cast<std::size_t>(n) * s.c + c] = is;
      float* dst = out.plane(n, c);
      for (std::size_t i = 0; i < hw; ++i) dst[i] = static_cast<float>(src[i] - mu) * is;
    }
  }
  return make_result(std::move(out), {x}, [s, hw, inv_std = std::move(inv_std)](Node& n) {
    Node* in = input(n, 0);
    if (!in) return;
    Tensor& g = in->grad_buffer();
    for (int b = 0; b < s.n; ++b) {
      for (int c = 0; c < s.c; ++c) {
        const float* go = n.grad.plane(b, c);
        const float* xhat = n.value.plane(b, c);
        double mg = 0.0, mgx = 0.0;
        for (std::size_t i = 0; i < hw; ++i) {
          mg += go[i];
          mgx += static_cast<double>(go[i]) * xhat[i];
        }
        mg /= static_cast<double>(hw);
        mgx /= static_cast<double>(hw);
        const float is = inv_std[static_cast<std::size_t>(b) * s.c + c];
        float* gi = g.plane(b, c);
        for (std::size_t i = 0; i < hw; ++i) {
          gi[i] += is * static_cast<float>(go[i] - mg - xhat[i] * mgx);
        }
      }
    }
  });
}

Var concat_channels(const Var& a, const Var& b) {
  const Shape sa = a.shape(), sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw ArgumentError("concat_channels: incompatible shapes " + sa.str() + " and " + sb.str());
  }
  const Shape os{sa.n, sa.c + sb.c, sa.h, sa.w};
  Tensor out(os);
  const std::size_t la = static_cast<std::size_t>(sa.c) * sa.plane();
  const std::size_t lb = static_cast<std::size_t>(sb.c) * sb.plane();
  for (int n = 0; n < os.n; ++n) {
    std::copy_n(a.value().sample(n), la, out.sample(n));
    std::copy_n(b.value().sample(n), lb, out.sample(n) + la);
  }
  return make_result(std::move(out), {a, b}, [os, la, lb](Node& n) {
    Node* ia = input(n, 0);
    Node* ib = input(n, 1);
    for (int s = 0; s < os.n; ++s) {
      const float* go = n.grad.sample(s);
      if (ia) {
        float* g = ia->grad_buffer().sample(s);
        for (std::size_t i = 0; i < la; ++i) g[i] += go[i];
      }
      if (ib) {
        float* g = ib->grad_buffer().sample(s);
        for (std::size_t i = 0; i < lb; ++i) g[i] += go[la + i];
      }
    }
  });
}

Var max_pool2(const Var& x) {
  const Shape s = x.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) throw ArgumentError("max_pool2: odd spatial size " + s.str());
  const Shape os{s.n, s.c, s.h / 2, s.w / 2};
  Tensor out(os);
  std::vector<std::uint32_t> arg(out.numel());
  std::size_t k = 0;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const float* src = x.value().plane(n, c);
      float* dst = out.plane(n, c);
      for (int y = 0; y < os.h; ++y) {
        for (int q = 0; q < os.w; ++q, ++k) {
          std::uint32_t best = static_cast<std::uint32_t>(2 * y * s.w + 2 * q);
          for (std::uint32_t cand : {best + 1, best + static_cast<std::uint32_t>(s.w),
                                     best + static_cast<std::uint32_t>(s.w) + 1}) {
            if (src[cand] > src[best]) best = cand;
          }
          dst[y * os.w + q] = src[best];
          arg[k] = best;
        }
      }
    }
  }
  return make_result(std::move(out), {x}, [s, os, arg = std::move(arg)](Node& n) {
    Node* in = input(n, 0);
    if (!in) return;
    Tensor& g = in->grad_buffer();
    std::size_t k = 0;
    for (int b = 0; b < s.n; ++b)
      for (int c = 0; c < s.c; ++c) {
        const float* go = n.grad.plane(b, c);
        float* gi = g.plane(b, c);
        for (std::size_t i = 0; i < os.plane(); ++i, ++k) gi[arg[k]] += go[i];
      }
  });
}

Var upsample_nearest2(const Var& x) {
  const Shape s = x.shape();
  const Shape os{s.n, s.c, s.h * 2, s.w * 2};
  Tensor out(os);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const float* src = x.value().plane(n, c);
      float* dst = out.plane(n, c);
      for (int y = 0; y < os.h; ++y)
        for (int q = 0; q < os.w; ++q) dst[y * os.w + q] = src[(y / 2) * s.w + q / 2];
    }
  return make_result(std::move(out), {x}, [s, os](Node& n) {
    Node* in = input(n, 0);
    if (!in) return;
    Tensor& g = in->grad_buffer();
    for (int b = 0; b < s.n; ++b)
      for (int c = 0; c < s.c; ++c) {
        const float* go = n.grad.plane(b, c);
        float* gi = g.plane(b, c);
        for (int y = 0; y < os.h; ++y)
          for (int q = 0; q < os.w; ++q) gi[(y / 2) * s.w + q / 2] += go[y * os.w + q];
      }
  });
}

Var warp(const Var& image, const Var& field) {
  const Shape si = image.shape(), sf = field.shape();
  if (sf.c != 2 || si.n != sf.n || si.h != sf.h || si.w != sf.w) {
    throw ArgumentError("warp: image " + si.str() + " incompatible with field " + sf.str());
  }
  const auto& k = kernels::active();
  Tensor out(si);
  for (int n = 0; n < si.n; ++n) {
    k.warp_forward(image.value().sample(n), si.c, si.h, si.w, field.value().sample(n), out.sample(n));
  }
  return make_result(std::move(out), {image, field}, [si](Node& n) {
    Node* img = input(n, 0);
    Node* fld = input(n, 1);
    const auto& kt = kernels::active();
    for (int b = 0; b < si.n; ++b) {
      kt.warp_backward(n.inputs[0]->value.sample(b), si.c, si.h, si.w, n.inputs[1]->value.sample(b),
                       n.grad.sample(b), img ? img->grad_buffer().sample(b) : nullptr,
                       fld ? fld->grad_buffer().sample(b) : nullptr);
    }
  });
}

Var mean(const Var& x) {
  double s = 0.0;
  for (float v : x.value().values()) s += v;
  const float inv = 1.0f / static_cast<float>(x.value().numel());
  return make_result(Tensor::scalar(static_cast<float>(s * inv)), {x}, [inv](Node& n) {
    Node* in = input(n, 0);
    if (!in) return;
    Tensor& g = in->grad_buffer();
    const float v = n.grad.item() * inv;
    for (auto& e : g.values()) e += v;
  });
}

Var l1_mean(const Var& a, const Var& b) {
  require_same_shape(a, b, "l1_mean");
  const std::size_t count = a.value().numel();
  const double s = kernels::active().abs_diff_sum(a.value().data(), b.value().data(), count);
  const float inv = 1.0f / static_cast<float>(count);
  return make_result(Tensor::scalar(static_cast<float>(s / static_cast<double>(count))), {a, b},
                     [inv](Node& n) {
                       Node* ia = input(n, 0);
                       Node* ib = input(n, 1);
                       const float* av = n.inputs[0]->value.data();
                       const float* bv = n.inputs[1]->value.data();
                       const float g = n.grad.item() * inv;
                       const std::size_t cnt = n.inputs[0]->value.numel();
                       float* ga = ia ? ia->grad_buffer().data() : nullptr;
                       float* gb = ib ? ib->grad_buffer().data() : nullptr;
                       for (std::size_t i = 0; i < cnt; ++i) {
                         const float d = av[i] - bv[i];
                         const float sg = d > 0.0f ? g : (d < 0.0f ? -g : 0.0f);
                         if (ga) ga[i] += sg;
                         if (gb) gb[i] -= sg;
                       }
                     });
}

Var gradient_energy(const Var& field) {
  const Shape s = field.shape();
  if (s.h < 2 || s.w < 2) throw ArgumentError("gradient_energy: needs at least 2x2, got " + s.str());
  const double inv = 1.0 / (static_cast<double>(s.plane()) * s.n);
  double total = 0.0;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const float* f = field.value().plane(n, c);
      for (int y = 0; y < s.h; ++y) {
        for (int q = 0; q < s.w; ++q) {
          const float v = f[y * s.w + q];
          if (y + 1 < s.h) {
            const double d = f[(y + 1) * s.w + q] - v;
            total += d * d;
          }
          if (q + 1 < s.w) {
            const double d = f[y * s.w + q + 1] - v;
            total += d * d;
          }
        }
      }
    }
  }
  return make_result(Tensor::scalar(static_cast<float>(total * inv)), {field}, [s, inv](Node& n) {
    Node* in = input(n, 0);
    if (!in) return;
    Tensor& g = in->grad_buffer();
    const float k = static_cast<float>(2.0 * inv) * n.grad.item();
    for (int b = 0; b < s.n; ++b) {
      for (int c = 0; c < s.c; ++c) {
        const float* f = in->value.plane(b, c);
        float* gf = g.plane(b, c);
        for (int y = 0; y < s.h; ++y) {
          for (int q = 0; q < s.w; ++q) {
            const int p = y * s.w + q;
            if (y + 1 < s.h) {
              const float d = k * (f[p + s.w] - f[p]);
              gf[p + s.w] += d;
              gf[p] -= d;
            }
            if (q + 1 < s.w) {
              const float d = k * (f[p + 1] - f[p]);
              gf[p + 1] += d;
              gf[p] -= d;
            }
          }
        }
      }
    }
  });
}

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace

Var bce_with_logits(const Var& logits, float target) {
  double s = 0.0;
  for (float l : logits.value().values()) s += softplus(l) - static_cast<double>(l) * target;
  const double inv = 1.0 / static_cast<double>(logits.value().numel());
  return make_result(Tensor::scalar(static_cast<float>(s * inv)), {logits}, [target, inv](Node& n) {
    Node* in = input(n, 0);
    if (!in) return;
    Tensor& g = in->grad_buffer();
    const double go = n.grad.item() * inv;
    const float* l = in->value.data();
    for (std::size_t i = 0; i < g.numel(); ++i) g.data()[i] += static_cast<float>(go * (sigmoid(l[i]) - target));
  });
}

Var log_one_minus_sigmoid(const Var& logits) {
  double s = 0.0;
  for (float l : logits.value().values()) s -= softplus(l);
  const double inv = 1.0 / static_cast<double>(logits.value().numel());
  return make_result(Tensor::scalar(static_cast<float>(s * inv)), {logits}, [inv](Node& n) {
    Node* in = input(n, 0);
    if (!in) return;
    Tensor& g = in->grad_buffer();
    const double go = n.grad.item() * inv;
    const float* l = in->value.data();
    for (std::size_t i = 0; i < g.numel(); ++i) g.data()[i] -= static_cast<float>(go * sigmoid(l[i]));
  });
}

}  // namespace dagan::ag
