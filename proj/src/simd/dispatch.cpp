#include <cstdlib>
#include <stdexcept>
#include <string>

#include "ediv/simd/kernels.hpp"

namespace ediv::simd {

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
  }
  return "unknown";
}

bool isa_available(Isa isa) {
  switch (isa) {
    case Isa::scalar: return true;
    case Isa::avx2:
#if defined(__x86_64__) || defined(_M_X64)
      __builtin_cpu_init();
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& table(Isa isa) {
  if (!isa_available(isa))
    throw std::invalid_argument("simd: ISA '" + std::string(isa_name(isa)) +
                                "' is not available on this host");
#if defined(__x86_64__) || defined(_M_X64)
  if (isa == Isa::avx2) return detail::avx2_table;
#endif
  return detail::scalar_table;
}

namespace {

const KernelTable& select() {
  if (const char* forced = std::getenv("EDIV_SIMD")) {
    const std::string_view name(forced);
    if (name == "scalar") return table(Isa::scalar);
    if (name == "avx2") return table(Isa::avx2);
    if (!name.empty() && name != "auto")
      throw std::invalid_argument("EDIV_SIMD must be one of auto, scalar, avx2");
  }
  return isa_available(Isa::avx2) ? table(Isa::avx2) : table(Isa::scalar);
}

}  // namespace

const KernelTable& active() {
  static const KernelTable& chosen = select();
  return chosen;
}

}  // namespace ediv::simd
