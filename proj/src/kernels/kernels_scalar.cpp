#include <algorithm>
#include <cmath>

#include "snn/kernels/kernels.hpp"

namespace snn::kernels {
namespace {

void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
          const double* b, std::size_t ldb, double* c, std::size_t ldc) {
    // i-k-j order keeps each C element's accumulation sequence ascending in k.
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * ldc;
        const double* arow = a + i * lda;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * ldb;
            for (std::size_t j = 0; j < n; ++j) crow[j] = std::fma(av, brow[j], crow[j]);
        }
    }
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

void add(std::size_t n, const double* x, const double* y, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + y[i];
}

void mul(std::size_t n, const double* x, const double* y, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

void mul_acc(std::size_t n, const double* x, const double* y, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::fma(x[i], y[i], out[i]);
}

void scale(std::size_t n, double alpha, const double* x, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}

void relu(std::size_t n, const double* x, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(std::size_t n, const double* x, const double* g, double* acc) {
    for (std::size_t i = 0; i < n; ++i) acc[i] += x[i] > 0.0 ? g[i] : 0.0;
}

void lif_step(std::size_t n, const double* h, const double* in, LifConstants c, double* u,
              double* s, double* h_next) {
    for (std::size_t i = 0; i < n; ++i) {
        const double ui = h[i] + (in[i] - (h[i] - c.u_reset)) * c.inv_tau;
        const double si = (ui - c.u_threshold) >= 0.0 ? 1.0 : 0.0;
        u[i] = ui;
        s[i] = si;
        h_next[i] = ui * (1.0 - si);
    }
}

}  // namespace

const KernelTable& scalar_table() {
    static const KernelTable table{Isa::Scalar, "scalar", gemm,  axpy,          add,
                                   mul,         mul_acc,  scale, relu,          relu_backward,
                                   lif_step};
    return table;
}

}  // namespace snn::kernels
