#pragma once

// Portable reference implementations of the data-parallel inner loops.
// Templated on the scalar type so gradient checks can run the exact same
// arithmetic in double. The float instantiations back the scalar ISA tier;
// SIMD tiers are tested for equivalence against them.

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace dagan::kernels::reference {

// Row-major C = alpha * op(A) * op(B) + beta * C, op(A) is M x K, op(B) is K x N.
template <class T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a,
          int lda, const T* b, int ldb, T beta, T* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    T* crow = c + static_cast<std::ptrdiff_t>(i) * ldc;
    if (beta == T(0)) {
      std::fill(crow, crow + n, T(0));
    } else if (beta != T(1)) {
      for (int j = 0; j < n; ++j) crow[j] *= beta;
    }
    for (int p = 0; p < k; ++p) {
      const T av = trans_a ? a[static_cast<std::ptrdiff_t>(p) * lda + i]
                           : a[static_cast<std::ptrdiff_t>(i) * lda + p];
      if (av == T(0)) continue;
      const T s = alpha * av;
      if (trans_b) {
        for (int j = 0; j < n; ++j) crow[j] += s * b[static_cast<std::ptrdiff_t>(j) * ldb + p];
      } else {
        const T* brow = b + static_cast<std::ptrdiff_t>(p) * ldb;
        for (int j = 0; j < n; ++j) crow[j] += s * brow[j];
      }
    }
  }
}

// Bilinear sample location for backward warping with clamp-to-edge.
template <class T>
struct BilinearTap {
  int y0, y1, x0, x1;
  T fy, fx;
  bool clamped_y, clamped_x;
};

template <class T>
inline BilinearTap<T> bilinear_tap(int row, int col, T dy, T dx, int h, int w) {
  BilinearTap<T> t{};
  T sy = static_cast<T>(row) + dy;
  T sx = static_cast<T>(col) + dx;
  const T ymax = static_cast<T>(h - 1);
  const T xmax = static_cast<T>(w - 1);
  t.clamped_y = sy < T(0) || sy > ymax;
  t.clamped_x = sx < T(0) || sx > xmax;
  sy = std::clamp(sy, T(0), ymax);
  sx = std::clamp(sx, T(0), xmax);
  const T fy0 = std::floor(sy);
  const T fx0 = std::floor(sx);
  t.y0 = static_cast<int>(fy0);
  t.x0 = static_cast<int>(fx0);
  t.y1 = std::min(t.y0 + 1, h - 1);
  t.x1 = std::min(t.x0 + 1, w - 1);
  t.fy = sy - fy0;
  t.fx = sx - fx0;
  return t;
}

// out(c, p) = image(c, p + field(p)); field planes are (dy, dx), image is
// `channels` planes of h*w.
template <class T>
void warp_forward(const T* image, int channels, int h, int w, const T* field, T* out) {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const T* fdy = field;
  const T* fdx = field + hw;
  for (int r = 0; r < h; ++r) {
    for (int q = 0; q < w; ++q) {
      const std::size_t p = static_cast<std::size_t>(r) * w + q;
      const auto t = bilinear_tap<T>(r, q, fdy[p], fdx[p], h, w);
      const std::size_t i00 = static_cast<std::size_t>(t.y0) * w + t.x0;
      const std::size_t i01 = static_cast<std::size_t>(t.y0) * w + t.x1;
      const std::size_t i10 = static_cast<std::size_t>(t.y1) * w + t.x0;
      const std::size_t i11 = static_cast<std::size_t>(t.y1) * w + t.x1;
      for (int c = 0; c < channels; ++c) {
        const T* im = image + c * hw;
        const T top = (T(1) - t.fx) * im[i00] + t.fx * im[i01];
        const T bot = (T(1) - t.fx) * im[i10] + t.fx * im[i11];
        out[c * hw + p] = (T(1) - t.fy) * top + t.fy * bot;
      }
    }
  }
}

// Accumulates d(out)/d(image) and d(out)/d(field) contracted with grad_out.
// Either gradient pointer may be null.
template <class T>
void warp_backward(const T* image, int channels, int h, int w, const T* field,
                   const T* grad_out, T* grad_image, T* grad_field) {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const T* fdy = field;
  const T* fdx = field + hw;
  for (int r = 0; r < h; ++r) {
    for (int q = 0; q < w; ++q) {
      const std::size_t p = static_cast<std::size_t>(r) * w + q;
      const auto t = bilinear_tap<T>(r, q, fdy[p], fdx[p], h, w);
      const std::size_t i00 = static_cast<std::size_t>(t.y0) * w + t.x0;
      const std::size_t i01 = static_cast<std::size_t>(t.y0) * w + t.x1;
      const std::size_t i10 = static_cast<std::size_t>(t.y1) * w + t.x0;
      const std::size_t i11 = static_cast<std::size_t>(t.y1) * w + t.x1;
      T gdy = 0, gdx = 0;
      for (int c = 0; c < channels; ++c) {
        const T g = grad_out[c * hw + p];
        const T* im = image + c * hw;
        if (grad_image) {
          T* gi = grad_image + c * hw;
          gi[i00] += g * (T(1) - t.fy) * (T(1) - t.fx);
          gi[i01] += g * (T(1) - t.fy) * t.fx;
          gi[i10] += g * t.fy * (T(1) - t.fx);
          gi[i11] += g * t.fy * t.fx;
        }
        if (grad_field) {
          const T top = (T(1) - t.fx) * im[i00] + t.fx * im[i01];
          const T bot = (T(1) - t.fx) * im[i10] + t.fx * im[i11];
          const T left = (T(1) - t.fy) * im[i00] + t.fy * im[i10];
          const T right = (T(1) - t.fy) * im[i01] + t.fy * im[i11];
          gdy += g * (bot - top);
          gdx += g * (right - left);
        }
      }
      if (grad_field) {
        if (!t.clamped_y) grad_field[p] += gdy;
        if (!t.clamped_x) grad_field[hw + p] += gdx;
      }
    }
  }
}

template <class T>
double abs_diff_sum(const T* a, const T* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::abs(static_cast<double>(a[i]) - b[i]);
  return s;
}

struct AdamStep {
  float lr;
  float beta1;
  float beta2;
  float eps;
  float weight_decay;
  float bias_correction1;  // 1 - beta1^t
  float bias_correction2;  // 1 - beta2^t
};

// Adam with L2-coupled weight decay (decay folded into the gradient).
template <class T>
void adam_update(T* param, const T* grad, T* m, T* v, std::size_t n, const AdamStep& s) {
  const T step = static_cast<T>(s.lr) / static_cast<T>(s.bias_correction1);
  const T bc2_sqrt = std::sqrt(static_cast<T>(s.bias_correction2));
  for (std::size_t i = 0; i < n; ++i) {
    const T g = grad[i] + static_cast<T>(s.weight_decay) * param[i];
    m[i] = static_cast<T>(s.beta1) * m[i] + (T(1) - static_cast<T>(s.beta1)) * g;
    v[i] = static_cast<T>(s.beta2) * v[i] + (T(1) - static_cast<T>(s.beta2)) * g * g;
    const T denom = std::sqrt(v[i]) / bc2_sqrt + static_cast<T>(s.eps);
    param[i] -= step * m[i] / denom;
  }
}

}  // namespace dagan::kernels::reference
