#include "glean/blas_dispatch.hpp"

#include <cblas.h>
#include <unistd.h>

#include <cstdlib>
#include <cstring>

namespace glean {

std::string blas_core_name() {
  const char* name = openblas_get_corename();
  return name ? name : "unknown";
}

void select_blas_kernel(char** argv) {
  if (std::getenv("OPENBLAS_CORETYPE") != nullptr) return;
  const std::string core = blas_core_name();
  if (core != "Prescott" && core != "Core2" && core != "unknown") return;

  const char* wanted = nullptr;
#if defined(__x86_64__)
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx512f") && __builtin_cpu_supports("avx512bw") && __builtin_cpu_supports("avx512vl") &&
      __builtin_cpu_supports("avx512dq")) {
    wanted = "SkylakeX";
  } else if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) {
    wanted = "Haswell";
  }
#endif
  if (wanted == nullptr) return;
  ::setenv("OPENBLAS_CORETYPE", wanted, 1);
  ::execv("/proc/self/exe", argv);
  // exec failed: keep running on the generic kernels.
}

}  // namespace glean
