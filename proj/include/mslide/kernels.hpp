#pragma once

// Hot loops exist twice: a plain serial reference (kept for tests and the
// benchmark) and an OpenMP version. Both produce bit-identical results since
// parallelism is only ever over independent output rows.

#include "mslide/matrix.hpp"

namespace mslide::kernels {

enum class Exec { Serial, Parallel };

namespace serial {
void matmul_into(const Matrix& a, const Matrix& b, Matrix& out);
} // namespace serial

namespace parallel {
void matmul_into(const Matrix& a, const Matrix& b, Matrix& out);
} // namespace parallel

void matmul_into(const Matrix& a, const Matrix& b, Matrix& out, Exec exec);

/// Threads OpenMP would use for a top-level parallel region.
int max_threads();

} // namespace mslide::kernels
