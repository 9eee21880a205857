#pragma once

#include <cstddef>
#include <string_view>

#include "dagan/kernels/reference.hpp"

namespace dagan::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

// Function table for one instruction-set tier. All tiers compute the same
// results up to floating-point reassociation (FMA contraction, lane order).
struct KernelTable {
  Isa isa;
  void (*gemm)(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
               const float* a, int lda, const float* b, int ldb, float beta,
               float* c, int ldc);
  void (*warp_forward)(const float* image, int channels, int h, int w,
                       const float* field, float* out);
  void (*warp_backward)(const float* image, int channels, int h, int w,
                        const float* field, const float* grad_out,
                        float* grad_image, float* grad_field);
  double (*abs_diff_sum)(const float* a, const float* b, std::size_t n);
  void (*adam_update)(float* param, const float* grad, float* m, float* v,
                      std::size_t n, const reference::AdamStep& step);
};

bool cpu_supports(Isa isa);

// Table for a specific tier; throws ArgumentError if the CPU lacks it.
const KernelTable& table(Isa isa);

// Currently selected tier. Chosen once at startup: the best supported tier,
// unless DAGAN_ISA=scalar|avx2 says otherwise.
const KernelTable& active();

// Override the active tier (tests and the CLI --isa flag).
void select(Isa isa);

const KernelTable& scalar_table();
#if defined(DAGAN_HAVE_AVX2)
const KernelTable& avx2_table();
#endif

}  // namespace dagan::kernels
