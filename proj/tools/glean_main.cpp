#include "glean/blas_dispatch.hpp"
#include "glean/cli.hpp"

int main(int argc, char** argv) {
  glean::select_blas_kernel(argv);
  return glean::cli_main(argc, argv);
}
