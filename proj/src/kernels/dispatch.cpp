#include "dagan/kernels/dispatch.hpp"

#include <cstdlib>
#include <string>

#include "dagan/error.hpp"

namespace dagan::kernels {

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
  }
  return "unknown";
}

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::scalar: return true;
    case Isa::avx2:
#if defined(DAGAN_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& table(Isa isa) {
  if (!cpu_supports(isa)) {
    throw ArgumentError("kernel tier '" + std::string(isa_name(isa)) + "' not supported on this CPU/build");
  }
#if defined(DAGAN_HAVE_AVX2)
  if (isa == Isa::avx2) return avx2_table();
#endif
  return scalar_table();
}

namespace {

const KernelTable* initial_table() {
  if (const char* env = std::getenv("DAGAN_ISA")) {
    const std::string v = env;
    if (v == "scalar") return &scalar_table();
    if (v == "avx2" && cpu_supports(Isa::avx2)) return &table(Isa::avx2);
  }
  if (cpu_supports(Isa::avx2)) return &table(Isa::avx2);
  return &scalar_table();
}

const KernelTable*& current() {
  static const KernelTable* t = initial_table();
  return t;
}

}  // namespace

const KernelTable& active() { return *current(); }

void select(Isa isa) { current() = &table(isa); }

}  // namespace dagan::kernels
