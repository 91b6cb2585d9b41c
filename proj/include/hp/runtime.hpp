/**
 * @file runtime.hpp
 * @brief Process-level setup shared by the executables.
 */
#pragma once

namespace hp {

// Re-executes the process with a safe OpenBLAS kernel when the auto-detected one is known
// to return wrong LAPACK results on this CPU (Cooperlake under some hypervisors). No-op otherwise.
void ensure_blas_kernel(char** argv);

}  // namespace hp
