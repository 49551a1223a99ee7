#include "driftfollow/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace dfw::kernels {

#if defined(DFW_HAVE_AVX2_BUILD)
const Ops* avx2_ops_impl();
#endif

const Ops* avx2_ops() {
#if defined(DFW_HAVE_AVX2_BUILD)
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
    return avx2_ops_impl();
#endif
  return nullptr;
}

const Ops& active() {
  static const Ops* selected = [] {
    const char* env = std::getenv("DRIFTFOLLOW_KERNELS");
    if (env && std::strcmp(env, "scalar") == 0) return &scalar_ops();
    if (const Ops* v = avx2_ops()) return v;
    return &scalar_ops();
  }();
  return *selected;
}

}  // namespace dfw::kernels
