#include "hp/runtime.hpp"

#include <cstdlib>
#include <strings.h>
#include <unistd.h>

extern "C" char* openblas_get_corename();

namespace hp {

void ensure_blas_kernel(char** argv) {
    if (std::getenv("OPENBLAS_CORETYPE")) return;
    const char* core = openblas_get_corename();
    if (!core || strcasecmp(core, "cooperlake") != 0) return;
    setenv("OPENBLAS_CORETYPE", "SkylakeX", 1);
    execv("/proc/self/exe", argv);
}

}  // namespace hp
