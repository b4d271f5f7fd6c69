#pragma once

// Inner-loop arithmetic behind the tensor ops. Each entry has a scalar
// reference and, where the CPU supports it, an AVX2/FMA variant selected at
// runtime. Variants evaluate the same expression tree in the same order
// (fused multiply-add where the scalar path uses std::fma), so results are
// bitwise identical across ISAs.

#include <cstddef>
#include <string_view>

namespace snn::kernels {

enum class Isa { Scalar, Avx2 };

struct LifConstants {
    double inv_tau;
    double u_reset;
    double u_threshold;
};

struct KernelTable {
    Isa isa;
    const char* name;

    // C[m x n] += A[m x k] * B[k x n], row-major with leading dimensions.
    // Each C element accumulates its k products in ascending k order via fma.
    void (*gemm)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                 const double* b, std::size_t ldb, double* c, std::size_t ldc);

    // y[i] = fma(alpha, x[i], y[i])
    void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
    // out[i] = x[i] + y[i]
    void (*add)(std::size_t n, const double* x, const double* y, double* out);
    // out[i] = x[i] * y[i]
    void (*mul)(std::size_t n, const double* x, const double* y, double* out);
    // out[i] = fma(x[i], y[i], out[i])
    void (*mul_acc)(std::size_t n, const double* x, const double* y, double* out);
    // out[i] = alpha * x[i]
    void (*scale)(std::size_t n, double alpha, const double* x, double* out);
    // out[i] = max(x[i], 0)
    void (*relu)(std::size_t n, const double* x, double* out);
    // acc[i] += x[i] > 0 ? g[i] : 0
    void (*relu_backward)(std::size_t n, const double* x, const double* g, double* acc);
    // One LIF step over n sites:
    //   u = h + (i - (h - u_reset)) * inv_tau; s = (u - u_threshold >= 0); h' = u * (1 - s)
    void (*lif_step)(std::size_t n, const double* h, const double* i, LifConstants c, double* u,
                     double* s, double* h_next);
};

const KernelTable& scalar_table();

/// nullptr when the build or the host CPU lacks AVX2+FMA.
const KernelTable* avx2_table();

/// Table used by the ops. Chosen on first use from SNN_SIMD
/// (scalar | avx2 | auto, default auto) and the host CPU.
const KernelTable& active();

/// Overrides the active table; returns false if the ISA is unavailable.
bool select(Isa isa);

bool parse_isa(std::string_view name, Isa& out);

}  // namespace snn::kernels
