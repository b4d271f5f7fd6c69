#include "sma_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace snn::testing {

namespace {

std::vector<double> scale_softmax(const std::vector<double>& logits, std::size_t n, std::size_t stride) {
    // logits laid out with the scale axis at stride `stride`; groups are contiguous blocks of n*stride.
    std::vector<double> out(logits.size());
    for (std::size_t g = 0; g < logits.size() / (n * stride); ++g) {
        for (std::size_t r = 0; r < stride; ++r) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < n; ++k) mx = std::max(mx, logits[g * n * stride + k * stride + r]);
            double z = 0.0;
            for (std::size_t k = 0; k < n; ++k) z += std::exp(logits[g * n * stride + k * stride + r] - mx);
            for (std::size_t k = 0; k < n; ++k) {
                const std::size_t i = g * n * stride + k * stride + r;
                out[i] = std::exp(logits[i] - mx) / z;
            }
        }
    }
    return out;
}

}  // namespace

OracleEncoded oracle_encode(const attention::SmaModule& mod, const std::vector<double>& x, Dims d) {
    const std::size_t N = mod.scales();
    OracleEncoded r;
    r.m.assign(d.b * N * d.t * d.c * d.h * d.w, 0.0);
    r.y.assign(d.numel(), 0.0);
    auto xi = [&](std::size_t b, std::size_t t, std::size_t c, std::size_t y, std::size_t w) {
        return x[(((b * d.t + t) * d.c + c) * d.h + y) * d.w + w];
    };
    auto mi = [&](std::size_t b, std::size_t n, std::size_t t, std::size_t c, std::size_t y, std::size_t w) {
        return ((((b * N + n) * d.t + t) * d.c + c) * d.h + y) * d.w + w;
    };
    for (std::size_t n = 0; n < N; ++n) {
        const int k = mod.config().kernels[n];
        const int pad = (k - 1) / 2;
        const auto ker = mod.enc_kernel[n].data();
        std::vector<double> conv(d.b * d.t * d.c * d.h * d.w, 0.0);
        for (std::size_t b = 0; b < d.b; ++b)
            for (std::size_t t = 0; t < d.t; ++t)
                for (std::size_t co = 0; co < d.c; ++co)
                    for (std::size_t y = 0; y < d.h; ++y)
                        for (std::size_t w = 0; w < d.w; ++w) {
                            double acc = 0.0;
                            for (std::size_t ci = 0; ci < d.c; ++ci)
                                for (int ky = 0; ky < k; ++ky)
                                    for (int kx = 0; kx < k; ++kx) {
                                        const long yy = static_cast<long>(y) + ky - pad;
                                        const long xx = static_cast<long>(w) + kx - pad;
                                        if (yy < 0 || xx < 0 || yy >= static_cast<long>(d.h) ||
                                            xx >= static_cast<long>(d.w))
                                            continue;
                                        acc += xi(b, t, ci, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx)) *
                                               ker[((co * d.c + ci) * k + ky) * k + kx];
                                    }
                            conv[(((b * d.t + t) * d.c + co) * d.h + y) * d.w + w] = acc;
                        }
        const auto gamma = mod.bn_gamma[n].data();
        const auto beta = mod.bn_beta[n].data();
        for (std::size_t c = 0; c < d.c; ++c) {
            double sum = 0.0, cnt = 0.0;
            for (std::size_t b = 0; b < d.b; ++b)
                for (std::size_t t = 0; t < d.t; ++t)
                    for (std::size_t i = 0; i < d.h * d.w; ++i) {
                        sum += conv[((b * d.t + t) * d.c + c) * d.h * d.w + i];
                        cnt += 1.0;
                    }
            const double mu = sum / cnt;
            double var = 0.0;
            for (std::size_t b = 0; b < d.b; ++b)
                for (std::size_t t = 0; t < d.t; ++t)
                    for (std::size_t i = 0; i < d.h * d.w; ++i) {
                        const double dv = conv[((b * d.t + t) * d.c + c) * d.h * d.w + i] - mu;
                        var += dv * dv;
                    }
            var /= cnt;
            for (std::size_t b = 0; b < d.b; ++b)
                for (std::size_t t = 0; t < d.t; ++t)
                    for (std::size_t y = 0; y < d.h; ++y)
                        for (std::size_t w = 0; w < d.w; ++w) {
                            const double v = conv[(((b * d.t + t) * d.c + c) * d.h + y) * d.w + w];
                            const double bn = (v - mu) / std::sqrt(var + 1e-5) * gamma[c] + beta[c];
                            r.m[mi(b, n, t, c, y, w)] = bn > 0.0 ? bn : 0.0;
                        }
        }
    }
    for (std::size_t b = 0; b < d.b; ++b)
        for (std::size_t t = 0; t < d.t; ++t)
            for (std::size_t c = 0; c < d.c; ++c)
                for (std::size_t y = 0; y < d.h; ++y)
                    for (std::size_t w = 0; w < d.w; ++w) {
                        double s = 0.0;
                        for (std::size_t n = 0; n < N; ++n) s += r.m[mi(b, n, t, c, y, w)];
                        r.y[(((b * d.t + t) * d.c + c) * d.h + y) * d.w + w] = s / static_cast<double>(N);
                    }
    return r;
}

std::vector<double> oracle_t_mse(const attention::SmaModule& mod, const std::vector<double>& y, Dims d) {
    const std::size_t N = mod.scales(), th = mod.time_hidden();
    const std::size_t plane = d.c * d.h * d.w;
    std::vector<double> logits(d.b * N * d.t);
    const auto sw = mod.t_squeeze_w.data(), sb = mod.t_squeeze_b.data();
    for (std::size_t b = 0; b < d.b; ++b) {
        std::vector<double> pooled(d.t, 0.0), hidden(th, 0.0);
        for (std::size_t t = 0; t < d.t; ++t) {
            for (std::size_t i = 0; i < plane; ++i) pooled[t] += y[(b * d.t + t) * plane + i];
            pooled[t] /= static_cast<double>(plane);
        }
        for (std::size_t j = 0; j < th; ++j) {
            double a = sb[j];
            for (std::size_t t = 0; t < d.t; ++t) a += sw[j * d.t + t] * pooled[t];
            hidden[j] = std::max(a, 0.0);
        }
        for (std::size_t n = 0; n < N; ++n) {
            const auto ew = mod.t_excite_w[n].data(), eb = mod.t_excite_b[n].data();
            for (std::size_t t = 0; t < d.t; ++t) {
                double a = eb[t];
                for (std::size_t j = 0; j < th; ++j) a += ew[t * th + j] * hidden[j];
                logits[(b * N + n) * d.t + t] = a;
            }
        }
    }
    return scale_softmax(logits, N, d.t);
}

std::vector<double> oracle_c_mse(const attention::SmaModule& mod, const std::vector<double>& y, Dims d) {
    const std::size_t N = mod.scales(), ch = mod.channel_hidden();
    const std::size_t hw = d.h * d.w;
    std::vector<double> logits(d.b * d.t * N * d.c);
    const auto sw = mod.c_squeeze_w.data(), sb = mod.c_squeeze_b.data();
    for (std::size_t b = 0; b < d.b; ++b)
        for (std::size_t t = 0; t < d.t; ++t) {
            std::vector<double> pooled(d.c, 0.0), hidden(ch, 0.0);
            for (std::size_t c = 0; c < d.c; ++c) {
                for (std::size_t i = 0; i < hw; ++i) pooled[c] += y[((b * d.t + t) * d.c + c) * hw + i];
                pooled[c] /= static_cast<double>(hw);
            }
            for (std::size_t j = 0; j < ch; ++j) {
                double a = sb[j];
                for (std::size_t c = 0; c < d.c; ++c) a += sw[j * d.c + c] * pooled[c];
                hidden[j] = std::max(a, 0.0);
            }
            for (std::size_t n = 0; n < N; ++n) {
                const auto ew = mod.c_excite_w[n].data(), eb = mod.c_excite_b[n].data();
                for (std::size_t c = 0; c < d.c; ++c) {
                    double a = eb[c];
                    for (std::size_t j = 0; j < ch; ++j) a += ew[c * ch + j] * hidden[j];
                    logits[((b * d.t + t) * N + n) * d.c + c] = a;
                }
            }
        }
    return scale_softmax(logits, N, d.c);
}

std::vector<double> oracle_apply(const std::vector<double>& m, const std::vector<double>& wa,
                                 const std::vector<double>& wb, std::size_t N, Dims d) {
    const std::size_t hw = d.h * d.w;
    std::vector<double> z(d.numel(), 0.0);
    for (std::size_t b = 0; b < d.b; ++b)
        for (std::size_t t = 0; t < d.t; ++t)
            for (std::size_t c = 0; c < d.c; ++c)
                for (std::size_t i = 0; i < hw; ++i) {
                    double acc = 0.0;
                    for (std::size_t n = 0; n < N; ++n) {
                        acc += m[(((b * N + n) * d.t + t) * d.c + c) * hw + i] * wa[(b * N + n) * d.t + t] *
                               wb[((b * d.t + t) * N + n) * d.c + c];
                    }
                    z[((b * d.t + t) * d.c + c) * hw + i] = acc;
                }
    return z;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace snn::testing
