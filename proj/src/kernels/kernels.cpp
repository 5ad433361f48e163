#include "echoloc/kernels.hpp"

#include <cstdlib>

#include "echoloc/errors.hpp"

namespace echoloc::kern {
namespace {

bool avx2_supported() {
#if defined(ECHOLOC_HAVE_AVX2)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelOps* resolve(const std::string& name) {
  if (name == "scalar") return &scalar_ops();
#if defined(ECHOLOC_HAVE_AVX2)
  if (name == "avx2") {
    if (!avx2_supported()) throw DataError("kernel lane 'avx2' not supported on this CPU");
    return &avx2_ops();
  }
#endif
  throw DataError("unknown kernel lane '" + name + "'");
}

const KernelOps* pick_default() {
  if (const char* env = std::getenv("ECHOLOC_KERNEL"); env && *env) return resolve(env);
#if defined(ECHOLOC_HAVE_AVX2)
  if (avx2_supported()) return &avx2_ops();
#endif
  return &scalar_ops();
}

const KernelOps*& active_slot() {
  static const KernelOps* active = pick_default();
  return active;
}

}  // namespace

const KernelOps& ops() { return *active_slot(); }

void set_kernel_override(const std::string& name) {
  active_slot() = name.empty() ? pick_default() : resolve(name);
}

std::string active_kernel_name() { return ops().name; }

}  // namespace echoloc::kern
