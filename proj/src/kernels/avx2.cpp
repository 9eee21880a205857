// AVX2 + FMA tier. This translation unit is compiled with -mavx2 -mfma and
// must only be entered after a runtime cpu_supports(Isa::avx2) check.

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "dagan/kernels/dispatch.hpp"

namespace dagan::kernels {
namespace {

// ---------------------------------------------------------------------------
// GEMM: packed panels + 6x16 register-blocked micro-kernel.

constexpr int kMr = 6;
constexpr int kNr = 16;
constexpr int kKc = 256;
constexpr int kMc = 96;
constexpr int kNc = 2048;

struct PackBuffers {
  std::vector<float> a;
  std::vector<float> b;
};

PackBuffers& buffers() {
  thread_local PackBuffers buf;
  return buf;
}

inline float load_a(bool ta, const float* a, int lda, int i, int p) {
  return ta ? a[static_cast<std::ptrdiff_t>(p) * lda + i] : a[static_cast<std::ptrdiff_t>(i) * lda + p];
}

inline float load_b(bool tb, const float* b, int ldb, int p, int j) {
  return tb ? b[static_cast<std::ptrdiff_t>(j) * ldb + p] : b[static_cast<std::ptrdiff_t>(p) * ldb + j];
}

void pack_a(bool ta, const float* a, int lda, int i0, int mc, int p0, int kc, float alpha,
            float* dst) {
  for (int is = 0; is < mc; is += kMr) {
    const int mr = std::min(kMr, mc - is);
    for (int p = 0; p < kc; ++p) {
      for (int ii = 0; ii < kMr; ++ii) {
        *dst++ = ii < mr ? alpha * load_a(ta, a, lda, i0 + is + ii, p0 + p) : 0.0f;
      }
    }
  }
}

void pack_b(bool tb, const float* b, int ldb, int p0, int kc, int j0, int nc, float* dst) {
  for (int js = 0; js < nc; js += kNr) {
    const int nr = std::min(kNr, nc - js);
    if (!tb && nr == kNr) {
      for (int p = 0; p < kc; ++p) {
        const float* src = b + static_cast<std::ptrdiff_t>(p0 + p) * ldb + j0 + js;
        _mm256_storeu_ps(dst, _mm256_loadu_ps(src));
        _mm256_storeu_ps(dst + 8, _mm256_loadu_ps(src + 8));
        dst += kNr;
      }
      continue;
    }
    for (int p = 0; p < kc; ++p) {
      for (int jj = 0; jj < kNr; ++jj) {
        *dst++ = jj < nr ? load_b(tb, b, ldb, p0 + p, j0 + js + jj) : 0.0f;
      }
    }
  }
}

void micro_kernel(int kc, const float* a, const float* b, float* c, int ldc, int mr, int nr) {
  __m256 acc[kMr][2];
  for (auto& row : acc) {
    row[0] = _mm256_setzero_ps();
    row[1] = _mm256_setzero_ps();
  }
  for (int p = 0; p < kc; ++p) {
    const __m256 b0 = _mm256_loadu_ps(b);
    const __m256 b1 = _mm256_loadu_ps(b + 8);
    for (int i = 0; i < kMr; ++i) {
      const __m256 av = _mm256_broadcast_ss(a + i);
      acc[i][0] = _mm256_fmadd_ps(av, b0, acc[i][0]);
      acc[i][1] = _mm256_fmadd_ps(av, b1, acc[i][1]);
    }
    a += kMr;
    b += kNr;
  }
  if (mr == kMr && nr == kNr) {
    for (int i = 0; i < kMr; ++i) {
      float* crow = c + static_cast<std::ptrdiff_t>(i) * ldc;
      _mm256_storeu_ps(crow, _mm256_add_ps(_mm256_loadu_ps(crow), acc[i][0]));
      _mm256_storeu_ps(crow + 8, _mm256_add_ps(_mm256_loadu_ps(crow + 8), acc[i][1]));
    }
    return;
  }
  alignas(32) float tmp[kMr * kNr];
  for (int i = 0; i < kMr; ++i) {
    _mm256_store_ps(tmp + i * kNr, acc[i][0]);
    _mm256_store_ps(tmp + i * kNr + 8, acc[i][1]);
  }
  for (int i = 0; i < mr; ++i) {
    float* crow = c + static_cast<std::ptrdiff_t>(i) * ldc;
    for (int j = 0; j < nr; ++j) crow[j] += tmp[i * kNr + j];
  }
}

void gemm_avx2(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda,
               const float* b, int ldb, float beta, float* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    float* crow = c + static_cast<std::ptrdiff_t>(i) * ldc;
    if (beta == 0.0f) {
      std::fill(crow, crow + n, 0.0f);
    } else if (beta != 1.0f) {
      for (int j = 0; j < n; ++j) crow[j] *= beta;
    }
  }
  if (m == 0 || n == 0 || k == 0 || alpha == 0.0f) return;

  auto& buf = buffers();
  buf.a.resize(static_cast<std::size_t>(kMc + kMr) * kKc);
  buf.b.resize(static_cast<std::size_t>(kNc + kNr) * kKc);

  for (int j0 = 0; j0 < n; j0 += kNc) {
    const int nc = std::min(kNc, n - j0);
    for (int p0 = 0; p0 < k; p0 += kKc) {
      const int kc = std::min(kKc, k - p0);
      pack_b(tb, b, ldb, p0, kc, j0, nc, buf.b.data());
      for (int i0 = 0; i0 < m; i0 += kMc) {
        const int mc = std::min(kMc, m - i0);
        pack_a(ta, a, lda, i0, mc, p0, kc, alpha, buf.a.data());
        for (int js = 0; js < nc; js += kNr) {
          const int nr = std::min(kNr, nc - js);
          const float* bp = buf.b.data() + static_cast<std::size_t>(js / kNr) * kNr * kc;
          for (int is = 0; is < mc; is += kMr) {
            const int mr = std::min(kMr, mc - is);
            const float* ap = buf.a.data() + static_cast<std::size_t>(is / kMr) * kMr * kc;
            float* cp = c + static_cast<std::ptrdiff_t>(i0 + is) * ldc + j0 + js;
            micro_kernel(kc, ap, bp, cp, ldc, mr, nr);
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Bilinear backward warp, 8 output pixels per iteration along a row.

struct Taps8 {
  __m256i i00, i01, i10, i11;
  __m256 fy, fx;
  __m256 clamped_y, clamped_x;  // all-ones lanes where the coordinate was clamped
};

inline Taps8 taps8(int row, int col, const float* dyp, const float* dxp, int h, int w) {
  const __m256 zero = _mm256_setzero_ps();
  const __m256 ymax = _mm256_set1_ps(static_cast<float>(h - 1));
  const __m256 xmax = _mm256_set1_ps(static_cast<float>(w - 1));
  const __m256 iota = _mm256_setr_ps(0, 1, 2, 3, 4, 5, 6, 7);
  __m256 sy = _mm256_add_ps(_mm256_set1_ps(static_cast<float>(row)), _mm256_loadu_ps(dyp));
  __m256 sx = _mm256_add_ps(_mm256_add_ps(_mm256_set1_ps(static_cast<float>(col)), iota),
                            _mm256_loadu_ps(dxp));
  Taps8 t;
  t.clamped_y = _mm256_or_ps(_mm256_cmp_ps(sy, zero, _CMP_LT_OQ), _mm256_cmp_ps(sy, ymax, _CMP_GT_OQ));
  t.clamped_x = _mm256_or_ps(_mm256_cmp_ps(sx, zero, _CMP_LT_OQ), _mm256_cmp_ps(sx, xmax, _CMP_GT_OQ));
  sy = _mm256_min_ps(_mm256_max_ps(sy, zero), ymax);
  sx = _mm256_min_ps(_mm256_max_ps(sx, zero), xmax);
  const __m256 fy0 = _mm256_floor_ps(sy);
  const __m256 fx0 = _mm256_floor_ps(sx);
  t.fy = _mm256_sub_ps(sy, fy0);
  t.fx = _mm256_sub_ps(sx, fx0);
  const __m256i y0 = _mm256_cvttps_epi32(fy0);
  const __m256i x0 = _mm256_cvttps_epi32(fx0);
  const __m256i one = _mm256_set1_epi32(1);
  const __m256i y1 = _mm256_min_epi32(_mm256_add_epi32(y0, one), _mm256_set1_epi32(h - 1));
  const __m256i x1 = _mm256_min_epi32(_mm256_add_epi32(x0, one), _mm256_set1_epi32(w - 1));
  const __m256i wv = _mm256_set1_epi32(w);
  const __m256i r0 = _mm256_mullo_epi32(y0, wv);
  const __m256i r1 = _mm256_mullo_epi32(y1, wv);
  t.i00 = _mm256_add_epi32(r0, x0);
  t.i01 = _mm256_add_epi32(r0, x1);
  t.i10 = _mm256_add_epi32(r1, x0);
  t.i11 = _mm256_add_epi32(r1, x1);
  return t;
}

inline __m256 lerp(__m256 a, __m256 b, __m256 t, __m256 one_minus_t) {
  return _mm256_fmadd_ps(t, b, _mm256_mul_ps(one_minus_t, a));
}

void warp_forward_avx2(const float* image, int channels, int h, int w, const float* field,
                       float* out) {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const __m256 one = _mm256_set1_ps(1.0f);
  const int wvec = w - w % 8;
  for (int r = 0; r < h; ++r) {
    const std::size_t row = static_cast<std::size_t>(r) * w;
    for (int q = 0; q < wvec; q += 8) {
      const std::size_t p = row + q;
      const Taps8 t = taps8(r, q, field + p, field + hw + p, h, w);
      const __m256 gy = _mm256_sub_ps(one, t.fy);
      const __m256 gx = _mm256_sub_ps(one, t.fx);
      for (int c = 0; c < channels; ++c) {
        const float* im = image + c * hw;
        const __m256 v00 = _mm256_i32gather_ps(im, t.i00, 4);
        const __m256 v01 = _mm256_i32gather_ps(im, t.i01, 4);
        const __m256 v10 = _mm256_i32gather_ps(im, t.i10, 4);
        const __m256 v11 = _mm256_i32gather_ps(im, t.i11, 4);
        const __m256 top = lerp(v00, v01, t.fx, gx);
        const __m256 bot = lerp(v10, v11, t.fx, gx);
        _mm256_storeu_ps(out + c * hw + p, lerp(top, bot, t.fy, gy));
      }
    }
    for (int q = wvec; q < w; ++q) {
      const std::size_t p = row + q;
      const auto t = reference::bilinear_tap<float>(r, q, field[p], field[hw + p], h, w);
      const std::size_t i00 = static_cast<std::size_t>(t.y0) * w + t.x0;
      const std::size_t i01 = static_cast<std::size_t>(t.y0) * w + t.x1;
      const std::size_t i10 = static_cast<std::size_t>(t.y1) * w + t.x0;
      const std::size_t i11 = static_cast<std::size_t>(t.y1) * w + t.x1;
      for (int c = 0; c < channels; ++c) {
        const float* im = image + c * hw;
        const float top = (1.0f - t.fx) * im[i00] + t.fx * im[i01];
        const float bot = (1.0f - t.fx) * im[i10] + t.fx * im[i11];
        out[c * hw + p] = (1.0f - t.fy) * top + t.fy * bot;
      }
    }
  }
}

void warp_backward_avx2(const float* image, int channels, int h, int w, const float* field,
                        const float* grad_out, float* grad_image, float* grad_field) {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const __m256 one = _mm256_set1_ps(1.0f);
  const int wvec = w - w % 8;
  alignas(32) std::int32_t idx[4][8];
  alignas(32) float wgt[4][8];
  for (int r = 0; r < h; ++r) {
    const std::size_t row = static_cast<std::size_t>(r) * w;
    for (int q = 0; q < wvec; q += 8) {
      const std::size_t p = row + q;
      const Taps8 t = taps8(r, q, field + p, field + hw + p, h, w);
      const __m256 gy = _mm256_sub_ps(one, t.fy);
      const __m256 gx = _mm256_sub_ps(one, t.fx);
      __m256 gdy = _mm256_setzero_ps();
      __m256 gdx = _mm256_setzero_ps();
      if (grad_image) {
        _mm256_store_si256(reinterpret_cast<__m256i*>(idx[0]), t.i00);
        _mm256_store_si256(reinterpret_cast<__m256i*>(idx[1]), t.i01);
        _mm256_store_si256(reinterpret_cast<__m256i*>(idx[2]), t.i10);
        _mm256_store_si256(reinterpret_cast<__m256i*>(idx[3]), t.i11);
      }
      for (int c = 0; c < channels; ++c) {
        const __m256 g = _mm256_loadu_ps(grad_out + c * hw + p);
        if (grad_image) {
          _mm256_store_ps(wgt[0], _mm256_mul_ps(g, _mm256_mul_ps(gy, gx)));
          _mm256_store_ps(wgt[1], _mm256_mul_ps(g, _mm256_mul_ps(gy, t.fx)));
          _mm256_store_ps(wgt[2], _mm256_mul_ps(g, _mm256_mul_ps(t.fy, gx)));
          _mm256_store_ps(wgt[3], _mm256_mul_ps(g, _mm256_mul_ps(t.fy, t.fx)));
          float* gi = grad_image + c * hw;
          for (int l = 0; l < 8; ++l) {
            gi[idx[0][l]] += wgt[0][l];
            gi[idx[1][l]] += wgt[1][l];
            gi[idx[2][l]] += wgt[2][l];
            gi[idx[3][l]] += wgt[3][l];
          }
        }
        if (grad_field) {
          const float* im = image + c * hw;
          const __m256 v00 = _mm256_i32gather_ps(im, t.i00, 4);
          const __m256 v01 = _mm256_i32gather_ps(im, t.i01, 4);
          const __m256 v10 = _mm256_i32gather_ps(im, t.i10, 4);
          const __m256 v11 = _mm256_i32gather_ps(im, t.i11, 4);
          const __m256 top = lerp(v00, v01, t.fx, gx);
          const __m256 bot = lerp(v10, v11, t.fx, gx);
          const __m256 left = lerp(v00, v10, t.fy, gy);
          const __m256 right = lerp(v01, v11, t.fy, gy);
          gdy = _mm256_fmadd_ps(g, _mm256_sub_ps(bot, top), gdy);
          gdx = _mm256_fmadd_ps(g, _mm256_sub_ps(right, left), gdx);
        }
      }
      if (grad_field) {
        gdy = _mm256_andnot_ps(t.clamped_y, gdy);
        gdx = _mm256_andnot_ps(t.clamped_x, gdx);
        float* gfy = grad_field + p;
        float* gfx = grad_field + hw + p;
        _mm256_storeu_ps(gfy, _mm256_add_ps(_mm256_loadu_ps(gfy), gdy));
        _mm256_storeu_ps(gfx, _mm256_add_ps(_mm256_loadu_ps(gfx), gdx));
      }
    }
    if (wvec < w) {
      // scalar tail
      for (int q = wvec; q < w; ++q) {
        const std::size_t p = row + q;
        const auto t = reference::bilinear_tap<float>(r, q, field[p], field[hw + p], h, w);
        const std::size_t i00 = static_cast<std::size_t>(t.y0) * w + t.x0;
        const std::size_t i01 = static_cast<std::size_t>(t.y0) * w + t.x1;
        const std::size_t i10 = static_cast<std::size_t>(t.y1) * w + t.x0;
        const std::size_t i11 = static_cast<std::size_t>(t.y1) * w + t.x1;
        float gdy = 0, gdx = 0;
        for (int c = 0; c < channels; ++c) {
          const float g = grad_out[c * hw + p];
          const float* im = image + c * hw;
          if (grad_image) {
            float* gi = grad_image + c * hw;
            gi[i00] += g * (1.0f - t.fy) * (1.0f - t.fx);
            gi[i01] += g * (1.0f - t.fy) * t.fx;
            gi[i10] += g * t.fy * (1.0f - t.fx);
            gi[i11] += g * t.fy * t.fx;
          }
          const float top = (1.0f - t.fx) * im[i00] + t.fx * im[i01];
          const float bot = (1.0f - t.fx) * im[i10] + t.fx * im[i11];
          const float left = (1.0f - t.fy) * im[i00] + t.fy * im[i10];
          const float right = (1.0f - t.fy) * im[i01] + t.fy * im[i11];
          gdy += g * (bot - top);
          gdx += g * (right - left);
        }
        if (grad_field) {
          if (!t.clamped_y) grad_field[p] += gdy;
          if (!t.clamped_x) grad_field[hw + p] += gdx;
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------

double abs_diff_sum_avx2(const float* a, const float* b, std::size_t n) {
  const __m256 sign = _mm256_set1_ps(-0.0f);
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 d = _mm256_andnot_ps(sign, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    acc0 = _mm256_add_pd(acc0, _mm256_cvtps_pd(_mm256_castps256_ps128(d)));
    acc1 = _mm256_add_pd(acc1, _mm256_cvtps_pd(_mm256_extractf128_ps(d, 1)));
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, _mm256_add_pd(acc0, acc1));
  double s = lanes[0] + lanes[1] + lanes[2] + lanes[3];
  for (; i < n; ++i) s += std::abs(static_cast<double>(a[i]) - b[i]);
  return s;
}

void adam_update_avx2(float* param, const float* grad, float* m, float* v, std::size_t n,
                      const reference::AdamStep& s) {
  const __m256 b1 = _mm256_set1_ps(s.beta1);
  const __m256 b2 = _mm256_set1_ps(s.beta2);
  const __m256 c1 = _mm256_set1_ps(1.0f - s.beta1);
  const __m256 c2 = _mm256_set1_ps(1.0f - s.beta2);
  const __m256 wd = _mm256_set1_ps(s.weight_decay);
  const __m256 eps = _mm256_set1_ps(s.eps);
  const __m256 step = _mm256_set1_ps(s.lr / s.bias_correction1);
  const __m256 bc2 = _mm256_set1_ps(std::sqrt(s.bias_correction2));
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 p = _mm256_loadu_ps(param + i);
    const __m256 g = _mm256_fmadd_ps(wd, p, _mm256_loadu_ps(grad + i));
    const __m256 mi = _mm256_fmadd_ps(c1, g, _mm256_mul_ps(b1, _mm256_loadu_ps(m + i)));
    const __m256 vi = _mm256_fmadd_ps(_mm256_mul_ps(c2, g), g, _mm256_mul_ps(b2, _mm256_loadu_ps(v + i)));
    const __m256 denom = _mm256_add_ps(_mm256_div_ps(_mm256_sqrt_ps(vi), bc2), eps);
    _mm256_storeu_ps(m + i, mi);
    _mm256_storeu_ps(v + i, vi);
    _mm256_storeu_ps(param + i, _mm256_sub_ps(p, _mm256_div_ps(_mm256_mul_ps(step, mi), denom)));
  }
  if (i < n) reference::adam_update<float>(param + i, grad + i, m + i, v + i, n - i, s);
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable t{Isa::avx2,        gemm_avx2,         warp_forward_avx2,
                             warp_backward_avx2, abs_diff_sum_avx2, adam_update_avx2};
  return t;
}

}  // namespace dagan::kernels
