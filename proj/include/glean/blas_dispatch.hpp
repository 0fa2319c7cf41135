#pragma once

#include <string>

namespace glean {

/// Kernel family OpenBLAS picked at load time.
std::string blas_core_name();

/// Older OpenBLAS builds fall back to SSE3 kernels on CPUs they do not
/// recognize. When that happens on an AVX2/AVX-512 machine and
/// OPENBLAS_CORETYPE is unset, this sets it and re-executes the current
/// process image with the same arguments. Returns normally otherwise.
void select_blas_kernel(char** argv);

}  // namespace glean
