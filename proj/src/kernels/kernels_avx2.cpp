// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.

#include "snn/kernels/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

#include <algorithm>
#include <cmath>

namespace snn::kernels {
namespace {

// 4 rows x 8 columns of C held in registers across the whole k loop.
inline void gemm_4x8(std::size_t k, const double* a, std::size_t lda, const double* b,
                     std::size_t ldb, double* c, std::size_t ldc) {
    __m256d c00 = _mm256_loadu_pd(c), c01 = _mm256_loadu_pd(c + 4);
    __m256d c10 = _mm256_loadu_pd(c + ldc), c11 = _mm256_loadu_pd(c + ldc + 4);
    __m256d c20 = _mm256_loadu_pd(c + 2 * ldc), c21 = _mm256_loadu_pd(c + 2 * ldc + 4);
    __m256d c30 = _mm256_loadu_pd(c + 3 * ldc), c31 = _mm256_loadu_pd(c + 3 * ldc + 4);
    for (std::size_t p = 0; p < k; ++p) {
        const double* bp = b + p * ldb;
        const __m256d b0 = _mm256_loadu_pd(bp);
        const __m256d b1 = _mm256_loadu_pd(bp + 4);
        __m256d av = _mm256_broadcast_sd(a + p);
        c00 = _mm256_fmadd_pd(av, b0, c00);
        c01 = _mm256_fmadd_pd(av, b1, c01);
        av = _mm256_broadcast_sd(a + lda + p);
        c10 = _mm256_fmadd_pd(av, b0, c10);
        c11 = _mm256_fmadd_pd(av, b1, c11);
        av = _mm256_broadcast_sd(a + 2 * lda + p);
        c20 = _mm256_fmadd_pd(av, b0, c20);
        c21 = _mm256_fmadd_pd(av, b1, c21);
        av = _mm256_broadcast_sd(a + 3 * lda + p);
        c30 = _mm256_fmadd_pd(av, b0, c30);
        c31 = _mm256_fmadd_pd(av, b1, c31);
    }
    _mm256_storeu_pd(c, c00);
    _mm256_storeu_pd(c + 4, c01);
    _mm256_storeu_pd(c + ldc, c10);
    _mm256_storeu_pd(c + ldc + 4, c11);
    _mm256_storeu_pd(c + 2 * ldc, c20);
    _mm256_storeu_pd(c + 2 * ldc + 4, c21);
    _mm256_storeu_pd(c + 3 * ldc, c30);
    _mm256_storeu_pd(c + 3 * ldc + 4, c31);
}

inline void gemm_1x8(std::size_t k, const double* a, const double* b, std::size_t ldb,
                     double* c) {
    __m256d c0 = _mm256_loadu_pd(c), c1 = _mm256_loadu_pd(c + 4);
    for (std::size_t p = 0; p < k; ++p) {
        const double* bp = b + p * ldb;
        const __m256d av = _mm256_broadcast_sd(a + p);
        c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(bp), c0);
        c1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(bp + 4), c1);
    }
    _mm256_storeu_pd(c, c0);
    _mm256_storeu_pd(c + 4, c1);
}

inline void gemm_1x4(std::size_t k, const double* a, const double* b, std::size_t ldb,
                     double* c) {
    __m256d c0 = _mm256_loadu_pd(c);
    for (std::size_t p = 0; p < k; ++p) {
        c0 = _mm256_fmadd_pd(_mm256_broadcast_sd(a + p), _mm256_loadu_pd(b + p * ldb), c0);
    }
    _mm256_storeu_pd(c, c0);
}

inline void gemm_1x1(std::size_t k, const double* a, const double* b, std::size_t ldb,
                     double* c) {
    double acc = *c;
    for (std::size_t p = 0; p < k; ++p) acc = std::fma(a[p], b[p * ldb], acc);
    *c = acc;
}

// Panels of K are processed in turn so that a 4x8 tile's slice of B stays in
// L1. Each C element still accumulates over p in increasing order.
constexpr std::size_t kBlockK = 128;

void gemm_block(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                const double* b, std::size_t ldb, double* c, std::size_t ldc) {
    const std::size_t n8 = n - n % 8;
    const std::size_t m4 = m - m % 4;
    for (std::size_t j = 0; j < n8; j += 8) {
        for (std::size_t i = 0; i < m4; i += 4) gemm_4x8(k, a + i * lda, lda, b + j, ldb, c + i * ldc + j, ldc);
        for (std::size_t i = m4; i < m; ++i) gemm_1x8(k, a + i * lda, b + j, ldb, c + i * ldc + j);
    }
    for (std::size_t i = 0; i < m; ++i) {
        std::size_t j = n8;
        for (; j + 4 <= n; j += 4) gemm_1x4(k, a + i * lda, b + j, ldb, c + i * ldc + j);
        for (; j < n; ++j) gemm_1x1(k, a + i * lda, b + j, ldb, c + i * ldc + j);
    }
}

void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
          const double* b, std::size_t ldb, double* c, std::size_t ldc) {
    for (std::size_t p = 0; p < k; p += kBlockK) {
        gemm_block(m, n, std::min(kBlockK, k - p), a + p, lda, b + p * ldb, ldb, c, ldc);
    }
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
    const __m256d av = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

void add(std::size_t n, const double* x, const double* y, double* out) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) out[i] = x[i] + y[i];
}

void mul(std::size_t n, const double* x, const double* y, double* out) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) out[i] = x[i] * y[i];
}

void mul_acc(std::size_t n, const double* x, const double* y, double* out) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i),
                                                  _mm256_loadu_pd(out + i)));
    }
    for (; i < n; ++i) out[i] = std::fma(x[i], y[i], out[i]);
}

void scale(std::size_t n, double alpha, const double* x, double* out) {
    const __m256d av = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) out[i] = alpha * x[i];
}

void relu(std::size_t n, const double* x, double* out) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d v = _mm256_loadu_pd(x + i);
        // Masked select matches the scalar `x > 0 ? x : 0` including for -0 and NaN.
        const __m256d keep = _mm256_cmp_pd(v, zero, _CMP_GT_OQ);
        _mm256_storeu_pd(out + i, _mm256_and_pd(keep, v));
    }
    for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(std::size_t n, const double* x, const double* g, double* acc) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d keep = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
        const __m256d gv = _mm256_and_pd(keep, _mm256_loadu_pd(g + i));
        _mm256_storeu_pd(acc + i, _mm256_add_pd(_mm256_loadu_pd(acc + i), gv));
    }
    for (; i < n; ++i) acc[i] += x[i] > 0.0 ? g[i] : 0.0;
}

void lif_step(std::size_t n, const double* h, const double* in, LifConstants c, double* u,
              double* s, double* h_next) {
    const __m256d inv_tau = _mm256_set1_pd(c.inv_tau);
    const __m256d u_reset = _mm256_set1_pd(c.u_reset);
    const __m256d u_th = _mm256_set1_pd(c.u_threshold);
    const __m256d one = _mm256_set1_pd(1.0);
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d hv = _mm256_loadu_pd(h + i);
        const __m256d iv = _mm256_loadu_pd(in + i);
        const __m256d leak = _mm256_sub_pd(iv, _mm256_sub_pd(hv, u_reset));
        const __m256d uv = _mm256_add_pd(hv, _mm256_mul_pd(leak, inv_tau));
        const __m256d fire = _mm256_cmp_pd(_mm256_sub_pd(uv, u_th), zero, _CMP_GE_OQ);
        const __m256d sv = _mm256_and_pd(fire, one);
        _mm256_storeu_pd(u + i, uv);
        _mm256_storeu_pd(s + i, sv);
        _mm256_storeu_pd(h_next + i, _mm256_mul_pd(uv, _mm256_sub_pd(one, sv)));
    }
    for (; i < n; ++i) {
        const double ui = h[i] + (in[i] - (h[i] - c.u_reset)) * c.inv_tau;
        const double si = (ui - c.u_threshold) >= 0.0 ? 1.0 : 0.0;
        u[i] = ui;
        s[i] = si;
        h_next[i] = ui * (1.0 - si);
    }
}

}  // namespace

const KernelTable& avx2_table_impl() {
    static const KernelTable table{Isa::Avx2, "avx2", gemm,  axpy,          add,
                                   mul,       mul_acc, scale, relu,          relu_backward,
                                   lif_step};
    return table;
}

bool avx2_compiled() { return true; }

}  // namespace snn::kernels

#else

namespace snn::kernels {

const KernelTable& avx2_table_impl() { return scalar_table(); }
bool avx2_compiled() { return false; }

}  // namespace snn::kernels

#endif
