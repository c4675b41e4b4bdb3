#pragma once

#include <cstddef>
#include <string>

// Dense double-precision inner loops behind the tensor layer.
//
// Two implementations share one dispatch table: a scalar reference and an
// AVX2 variant. Both compute each output element with the same operation
// order and without FMA contraction, so every kernel except dot() is
// bitwise-equal across implementations (dot uses striped accumulators and
// is equivalence-tested under a tolerance instead).
//
// The active table is picked once at startup from CPU capabilities; the
// SAGC_KERNELS environment variable ("scalar" or "avx2") overrides it.

namespace sagc::kernels {

struct Ops {
    const char* name;

    // c = a(m x k) * b(k x n), all row-major; c is overwritten.
    void (*matmul)(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n);
    // out = a + b
    void (*add)(const double* a, const double* b, double* out, std::size_t n);
    // out = a * b, elementwise
    void (*mul)(const double* a, const double* b, double* out, std::size_t n);
    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // x *= alpha
    void (*scale)(double alpha, double* x, std::size_t n);
    // sum_i a[i] * b[i]
    double (*dot)(const double* a, const double* b, std::size_t n);
};

const Ops& scalar_ops();

// AVX2 table, or nullptr when unsupported by the build or the CPU.
const Ops* avx2_ops();

// The table all tensor operations route through.
const Ops& active();

// Force a named implementation (tests). Throws ConfigError if unavailable.
void force(const std::string& name);

} // namespace sagc::kernels
