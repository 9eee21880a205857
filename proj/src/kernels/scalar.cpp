#include "dagan/kernels/dispatch.hpp"

namespace dagan::kernels {
namespace {

void gemm_scalar(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda,
                 const float* b, int ldb, float beta, float* c, int ldc) {
  reference::gemm<float>(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void warp_forward_scalar(const float* image, int channels, int h, int w, const float* field,
                         float* out) {
  reference::warp_forward<float>(image, channels, h, w, field, out);
}

void warp_backward_scalar(const float* image, int channels, int h, int w, const float* field,
                          const float* grad_out, float* grad_image, float* grad_field) {
  reference::warp_backward<float>(image, channels, h, w, field, grad_out, grad_image, grad_field);
}

double abs_diff_sum_scalar(const float* a, const float* b, std::size_t n) {
  return reference::abs_diff_sum<float>(a, b, n);
}

void adam_update_scalar(float* param, const float* grad, float* m, float* v, std::size_t n,
                        const reference::AdamStep& step) {
  reference::adam_update<float>(param, grad, m, v, n, step);
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable t{Isa::scalar,        gemm_scalar,        warp_forward_scalar,
                             warp_backward_scalar, abs_diff_sum_scalar, adam_update_scalar};
  return t;
}

}  // namespace dagan::kernels
