#include <algorithm>
#include <cmath>
#include <limits>

#include "ops_internal.hpp"
#include "snn/tensor/ops.hpp"

namespace snn::ops {

using namespace detail;

namespace {

struct ConvGeometry {
    std::size_t frames, c_in, h, w, c_out, k, stride, pad, h_out, w_out;
    std::size_t patch() const { return c_in * k * k; }
    std::size_t plane_in() const { return c_in * h * w; }
    std::size_t plane_out() const { return c_out * h_out * w_out; }
    std::size_t pixels_out() const { return h_out * w_out; }
    bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

/// Output columns [lo, hi) whose input column ox*s - p + kx lies inside [0, w).
struct ColumnRange {
    std::size_t lo, hi;
};

ColumnRange valid_columns(const ConvGeometry& g, std::size_t kx) {
    const long s = static_cast<long>(g.stride);
    const long off = static_cast<long>(kx) - static_cast<long>(g.pad);  // ix = ox*s + off
    const long lo = off >= 0 ? 0 : (-off + s - 1) / s;
    const long last = static_cast<long>(g.w) - 1 - off;  // ox*s <= last
    long hi = last < 0 ? 0 : last / s + 1;
    hi = std::min(hi, static_cast<long>(g.w_out));
    return {static_cast<std::size_t>(std::min(lo, hi)), static_cast<std::size_t>(hi)};
}

// col[(c*k + ky)*k + kx][oy*w_out + ox] = x[c][oy*s - p + ky][ox*s - p + kx]
void im2col(const ConvGeometry& g, const double* x, double* col) {
    const std::size_t hw_out = g.pixels_out();
    for (std::size_t c = 0; c < g.c_in; ++c) {
        for (std::size_t ky = 0; ky < g.k; ++ky) {
            for (std::size_t kx = 0; kx < g.k; ++kx) {
                const ColumnRange r = valid_columns(g, kx);
                const long off = static_cast<long>(kx) - static_cast<long>(g.pad);
                double* dst = col + ((c * g.k + ky) * g.k + kx) * hw_out;
                for (std::size_t oy = 0; oy < g.h_out; ++oy) {
                    const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                    double* row = dst + oy * g.w_out;
                    if (iy < 0 || iy >= static_cast<long>(g.h)) {
                        std::fill_n(row, g.w_out, 0.0);
                        continue;
                    }
                    const double* src = x + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
                    std::fill_n(row, r.lo, 0.0);
                    if (g.stride == 1) {
                        std::copy_n(src + (static_cast<long>(r.lo) + off), r.hi - r.lo, row + r.lo);
                    } else {
                        for (std::size_t ox = r.lo; ox < r.hi; ++ox) {
                            row[ox] = src[static_cast<long>(ox * g.stride) + off];
                        }
                    }
                    std::fill(row + r.hi, row + g.w_out, 0.0);
                }
            }
        }
    }
}

void col2im_add(const ConvGeometry& g, const double* col, double* dx) {
    const std::size_t hw_out = g.pixels_out();
    for (std::size_t c = 0; c < g.c_in; ++c) {
        for (std::size_t ky = 0; ky < g.k; ++ky) {
            for (std::size_t kx = 0; kx < g.k; ++kx) {
                const ColumnRange r = valid_columns(g, kx);
                const long off = static_cast<long>(kx) - static_cast<long>(g.pad);
                const double* src = col + ((c * g.k + ky) * g.k + kx) * hw_out;
                for (std::size_t oy = 0; oy < g.h_out; ++oy) {
                    const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                    if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
                    double* dst = dx + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
                    const double* s = src + oy * g.w_out;
                    for (std::size_t ox = r.lo; ox < r.hi; ++ox) dst[static_cast<long>(ox * g.stride) + off] += s[ox];
                }
            }
        }
    }
}

// Cache-blocked out[c][r] = a[r][c] for a rows x cols matrix.
void transpose_into(const double* a, std::size_t rows, std::size_t cols, double* out) {
    constexpr std::size_t kBlock = 32;
    for (std::size_t r0 = 0; r0 < rows; r0 += kBlock) {
        const std::size_t r1 = std::min(rows, r0 + kBlock);
        for (std::size_t c0 = 0; c0 < cols; c0 += kBlock) {
            const std::size_t c1 = std::min(cols, c0 + kBlock);
            for (std::size_t r = r0; r < r1; ++r)
                for (std::size_t c = c0; c < c1; ++c) out[c * rows + r] = a[r * cols + c];
        }
    }
}

// Transposed layout: row[oy*w_out + ox][(c*k + ky)*k + kx].
void im2row(const ConvGeometry& g, const double* x, double* rows, std::vector<double>& scratch) {
    if (g.pointwise()) {
        transpose_into(x, g.patch(), g.pixels_out(), rows);
        return;
    }
    scratch.resize(g.patch() * g.pixels_out());
    im2col(g, x, scratch.data());
    transpose_into(scratch.data(), g.patch(), g.pixels_out(), rows);
}

std::vector<double> transpose(const double* a, std::size_t rows, std::size_t cols) {
    std::vector<double> t(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) t[c * rows + r] = a[r * cols + c];
    }
    return t;
}

}  // namespace

Value conv2d(const Value& input, const Value& kernel, const Value& bias, int stride, int padding) {
    const Shape& xs = input.shape();
    const Shape& ks = kernel.shape();
    if (xs.rank() < 3 || ks.rank() != 4 || ks[2] != ks[3]) {
        throw ShapeError("conv2d: expected input [..., C, H, W] and square kernel [Co, Ci, k, k], got " +
                         xs.str() + " and " + ks.str());
    }
    if (stride < 1 || padding < 0) throw ShapeError("conv2d: stride must be >= 1 and padding >= 0");
    ConvGeometry g{};
    const std::size_t r = xs.rank();
    g.c_in = xs[r - 3];
    g.h = xs[r - 2];
    g.w = xs[r - 1];
    g.frames = xs.span(0, r - 3);
    g.c_out = ks[0];
    g.k = ks[2];
    g.stride = static_cast<std::size_t>(stride);
    g.pad = static_cast<std::size_t>(padding);
    if (ks[1] != g.c_in) {
        throw ShapeError("conv2d: input has " + std::to_string(g.c_in) + " channels but kernel " + ks.str() +
                         " expects " + std::to_string(ks[1]) + " (input " + xs.str() + ")");
    }
    if (g.h + 2 * g.pad < g.k || g.w + 2 * g.pad < g.k) {
        throw ShapeError("conv2d: kernel " + ks.str() + " larger than padded input " + xs.str());
    }
    g.h_out = (g.h + 2 * g.pad - g.k) / g.stride + 1;
    g.w_out = (g.w + 2 * g.pad - g.k) / g.stride + 1;
    const bool has_bias = bias.defined();
    if (has_bias && bias.numel() != g.c_out) {
        throw ShapeError("conv2d: bias " + bias.shape().str() + " does not match " + std::to_string(g.c_out) +
                         " output channels");
    }

    std::vector<std::size_t> dims = xs.dims();
    dims[r - 3] = g.c_out;
    dims[r - 2] = g.h_out;
    dims[r - 1] = g.w_out;
    std::vector<double> out(g.frames * g.plane_out(), 0.0);

    const double* x = input.data().data();
    const double* kw = kernel.data().data();
    const double* b = has_bias ? bias.data().data() : nullptr;
    const std::size_t hw_out = g.pixels_out();
    const std::size_t patch = g.patch();
    parallel_for(g.frames, [&](std::size_t f) {
        double* y = out.data() + f * g.plane_out();
        if (b) {
            for (std::size_t co = 0; co < g.c_out; ++co) std::fill_n(y + co * hw_out, hw_out, b[co]);
        }
        const double* xf = x + f * g.plane_in();
        if (g.pointwise()) {
            kt().gemm(g.c_out, hw_out, patch, kw, patch, xf, hw_out, y, hw_out);
            return;
        }
        thread_local std::vector<double> col;
        col.resize(patch * hw_out);
        im2col(g, xf, col.data());
        kt().gemm(g.c_out, hw_out, patch, kw, patch, col.data(), hw_out, y, hw_out);
    });

    std::vector<Value> parents{input, kernel};
    if (has_bias) parents.push_back(bias);
    return make_result(
        Shape(std::move(dims)), std::move(out), std::move(parents),
        [g, has_bias](Node& self) {
            Node& px = parent(self, 0);
            Node& pk = parent(self, 1);
            const std::size_t hw_out = g.pixels_out();
            const std::size_t patch = g.patch();
            const double* dy = self.grad.data();

            if (auto dx = grad_of(px); !dx.empty()) {
                const std::vector<double> kt_ = transpose(pk.data.data(), g.c_out, patch);
                parallel_for(g.frames, [&](std::size_t f) {
                    const double* dyf = dy + f * g.plane_out();
                    double* dxf = dx.data() + f * g.plane_in();
                    if (g.pointwise()) {
                        kt().gemm(patch, hw_out, g.c_out, kt_.data(), g.c_out, dyf, hw_out, dxf, hw_out);
                        return;
                    }
                    thread_local std::vector<double> dcol;
                    dcol.assign(patch * hw_out, 0.0);
                    kt().gemm(patch, hw_out, g.c_out, kt_.data(), g.c_out, dyf, hw_out, dcol.data(), hw_out);
                    col2im_add(g, dcol.data(), dxf);
                });
            }
            if (auto dk = grad_of(pk); !dk.empty()) {
                std::vector<double> rows(hw_out * patch), scratch;
                for (std::size_t f = 0; f < g.frames; ++f) {
                    im2row(g, px.data.data() + f * g.plane_in(), rows.data(), scratch);
                    kt().gemm(g.c_out, patch, hw_out, dy + f * g.plane_out(), hw_out, rows.data(), patch,
                              dk.data(), patch);
                }
            }
            if (has_bias) {
                if (auto db = grad_of(parent(self, 2)); !db.empty()) {
                    for (std::size_t f = 0; f < g.frames; ++f) {
                        for (std::size_t co = 0; co < g.c_out; ++co) {
                            const double* d = dy + f * g.plane_out() + co * hw_out;
                            double s = 0.0;
                            for (std::size_t i = 0; i < hw_out; ++i) s += d[i];
                            db[co] += s;
                        }
                    }
                }
            }
        },
        "conv2d");
}

Value batch_norm(const Value& input, const Value& gamma, const Value& beta, BatchNormStats& stats,
                 const BatchNormOptions& opts) {
    const Shape& s = input.shape();
    const std::size_t axis = s.axis(opts.channel_axis);
    const std::size_t outer = s.span(0, axis);
    const std::size_t channels = s[axis];
    const std::size_t inner = s.span(axis + 1, s.rank());
    if (gamma.numel() != channels || beta.numel() != channels) {
        throw ShapeError("batch_norm: gamma/beta " + gamma.shape().str() + "/" + beta.shape().str() +
                         " do not match channel extent " + std::to_string(channels) + " of " + s.str());
    }
    if (stats.running_mean.size() != channels) stats = BatchNormStats(channels);
    const std::size_t count = outer * inner;
    const auto x = input.data();
    const auto gm = gamma.data();
    const auto bt = beta.data();

    std::vector<double> mean(channels), inv_std(channels);
    if (opts.train) {
        for (std::size_t c = 0; c < channels; ++c) {
            double acc = 0.0;
            for (std::size_t o = 0; o < outer; ++o) {
                const double* p = x.data() + (o * channels + c) * inner;
                for (std::size_t i = 0; i < inner; ++i) acc += p[i];
            }
            const double mu = acc / static_cast<double>(count);
            double var = 0.0;
            for (std::size_t o = 0; o < outer; ++o) {
                const double* p = x.data() + (o * channels + c) * inner;
                for (std::size_t i = 0; i < inner; ++i) var += (p[i] - mu) * (p[i] - mu);
            }
            var /= static_cast<double>(count);
            mean[c] = mu;
            inv_std[c] = 1.0 / std::sqrt(var + opts.epsilon);
            stats.running_mean[c] = opts.momentum * stats.running_mean[c] + (1.0 - opts.momentum) * mu;
            stats.running_var[c] = opts.momentum * stats.running_var[c] + (1.0 - opts.momentum) * var;
        }
    } else {
        for (std::size_t c = 0; c < channels; ++c) {
            mean[c] = stats.running_mean[c];
            inv_std[c] = 1.0 / std::sqrt(stats.running_var[c] + opts.epsilon);
        }
    }

    std::vector<double> xhat(x.size()), out(x.size());
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t base = (o * channels + c) * inner;
            for (std::size_t i = 0; i < inner; ++i) {
                const double h = (x[base + i] - mean[c]) * inv_std[c];
                xhat[base + i] = h;
                out[base + i] = gm[c] * h + bt[c];
            }
        }
    }

    const bool train = opts.train;
    return make_result(
        s, std::move(out), {input, gamma, beta},
        [outer, channels, inner, count, train, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
            Node& px = parent(self, 0);
            Node& pg = parent(self, 1);
            Node& pb = parent(self, 2);
            const double* dy = self.grad.data();
            std::vector<double> sum_dy(channels, 0.0), sum_dy_xhat(channels, 0.0);
            for (std::size_t o = 0; o < outer; ++o) {
                for (std::size_t c = 0; c < channels; ++c) {
                    const std::size_t base = (o * channels + c) * inner;
                    for (std::size_t i = 0; i < inner; ++i) {
                        sum_dy[c] += dy[base + i];
                        sum_dy_xhat[c] += dy[base + i] * xhat[base + i];
                    }
                }
            }
            if (auto dg = grad_of(pg); !dg.empty()) {
                for (std::size_t c = 0; c < channels; ++c) dg[c] += sum_dy_xhat[c];
            }
            if (auto db = grad_of(pb); !db.empty()) {
                for (std::size_t c = 0; c < channels; ++c) db[c] += sum_dy[c];
            }
            if (auto dx = grad_of(px); !dx.empty()) {
                const double n = static_cast<double>(count);
                for (std::size_t o = 0; o < outer; ++o) {
                    for (std::size_t c = 0; c < channels; ++c) {
                        const std::size_t base = (o * channels + c) * inner;
                        const double gscale = pg.data[c] * inv_std[c];
                        if (train) {
                            const double mdy = sum_dy[c] / n;
                            const double mdx = sum_dy_xhat[c] / n;
                            for (std::size_t i = 0; i < inner; ++i) {
                                dx[base + i] += gscale * (dy[base + i] - mdy - xhat[base + i] * mdx);
                            }
                        } else {
                            for (std::size_t i = 0; i < inner; ++i) dx[base + i] += gscale * dy[base + i];
                        }
                    }
                }
            }
        },
        "batch_norm");
}

Value max_pool2d(const Value& input, int window, int stride, int padding) {
    const Shape& s = input.shape();
    if (s.rank() < 2) throw ShapeError("max_pool2d: input needs trailing H x W, got " + s.str());
    if (window < 1 || stride < 1 || padding < 0 || padding >= window) {
        throw ShapeError("max_pool2d: invalid window/stride/padding");
    }
    const std::size_t r = s.rank();
    const std::size_t h = s[r - 2], w = s[r - 1];
    const std::size_t planes = s.span(0, r - 2);
    const auto win = static_cast<std::size_t>(window), st = static_cast<std::size_t>(stride),
               pad = static_cast<std::size_t>(padding);
    if (win > h + 2 * pad || win > w + 2 * pad) {
        throw ShapeError("max_pool2d: window larger than padded input " + s.str());
    }
    const std::size_t ho = (h + 2 * pad - win) / st + 1;
    const std::size_t wo = (w + 2 * pad - win) / st + 1;
    std::vector<std::size_t> dims = s.dims();
    dims[r - 2] = ho;
    dims[r - 1] = wo;
    std::vector<double> out(planes * ho * wo);
    std::vector<std::size_t> argmax(out.size());
    const auto x = input.data();
    for (std::size_t p = 0; p < planes; ++p) {
        for (std::size_t oy = 0; oy < ho; ++oy) {
            for (std::size_t ox = 0; ox < wo; ++ox) {
                double best = -std::numeric_limits<double>::infinity();
                std::size_t best_idx = std::numeric_limits<std::size_t>::max();
                for (std::size_t ky = 0; ky < win; ++ky) {
                    const long iy = static_cast<long>(oy * st + ky) - static_cast<long>(pad);
                    if (iy < 0 || iy >= static_cast<long>(h)) continue;
                    for (std::size_t kx = 0; kx < win; ++kx) {
                        const long ix = static_cast<long>(ox * st + kx) - static_cast<long>(pad);
                        if (ix < 0 || ix >= static_cast<long>(w)) continue;
                        const std::size_t idx = (p * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix);
                        if (best_idx == std::numeric_limits<std::size_t>::max() || x[idx] > best) {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                }
                const std::size_t o = (p * ho + oy) * wo + ox;
                out[o] = best;
                argmax[o] = best_idx;
            }
        }
    }
    return make_result(Shape(std::move(dims)), std::move(out), {input},
                       [argmax = std::move(argmax)](Node& self) {
                           auto gx = grad_of(parent(self, 0));
                           for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += self.grad[o];
                       },
                       "max_pool2d");
}

Value avg_pool_global(const Value& input) {
    const Shape& s = input.shape();
    if (s.rank() < 2) throw ShapeError("avg_pool_global: input needs trailing H x W, got " + s.str());
    const std::size_t r = s.rank();
    const std::size_t hw = s[r - 2] * s[r - 1];
    const std::size_t planes = s.span(0, r - 2);
    std::vector<std::size_t> dims = s.dims();
    dims[r - 2] = 1;
    dims[r - 1] = 1;
    std::vector<double> out(planes);
    const auto x = input.data();
    for (std::size_t p = 0; p < planes; ++p) {
        double acc = 0.0;
        for (std::size_t i = 0; i < hw; ++i) acc += x[p * hw + i];
        out[p] = acc / static_cast<double>(hw);
    }
    return make_result(Shape(std::move(dims)), std::move(out), {input},
                       [planes, hw](Node& self) {
                           auto gx = grad_of(parent(self, 0));
                           const double inv = 1.0 / static_cast<double>(hw);
                           for (std::size_t p = 0; p < planes; ++p) {
                               const double g = self.grad[p] * inv;
                               for (std::size_t i = 0; i < hw; ++i) gx[p * hw + i] += g;
                           }
                       },
                       "avg_pool_global");
}

Value avg_pool2d(const Value& input, int window) {
    const Shape& s = input.shape();
    const std::size_t r = s.rank();
    if (r < 2 || window < 1) throw ShapeError("avg_pool2d: input needs trailing H x W, got " + s.str());
    const std::size_t k = static_cast<std::size_t>(window);
    const std::size_t h = s[r - 2], w = s[r - 1];
    if (h % k != 0 || w % k != 0) {
        throw ShapeError("avg_pool2d: window " + std::to_string(k) + " does not tile " + s.str());
    }
    const std::size_t oh = h / k, ow = w / k, planes = s.span(0, r - 2);
    std::vector<std::size_t> dims = s.dims();
    dims[r - 2] = oh;
    dims[r - 1] = ow;
    std::vector<double> out(planes * oh * ow);
    const auto x = input.data();
    const double inv = 1.0 / static_cast<double>(k * k);
    for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
                double acc = 0.0;
                for (std::size_t dy = 0; dy < k; ++dy)
                    for (std::size_t dx = 0; dx < k; ++dx) acc += x[(p * h + oy * k + dy) * w + ox * k + dx];
                out[(p * oh + oy) * ow + ox] = acc * inv;
            }
    return make_result(Shape(std::move(dims)), std::move(out), {input},
                       [planes, h, w, k, oh, ow, inv](Node& self) {
                           auto gx = grad_of(parent(self, 0));
                           for (std::size_t p = 0; p < planes; ++p)
                               for (std::size_t oy = 0; oy < oh; ++oy)
                                   for (std::size_t ox = 0; ox < ow; ++ox) {
                                       const double g = self.grad[(p * oh + oy) * ow + ox] * inv;
                                       for (std::size_t dy = 0; dy < k; ++dy)
                                           for (std::size_t dx = 0; dx < k; ++dx)
                                               gx[(p * h + oy * k + dy) * w + ox * k + dx] += g;
                                   }
                       },
                       "avg_pool2d");
}

namespace {

struct AxisSplit {
    std::size_t outer, extent, inner;
};

AxisSplit split_axis(const Shape& s, int axis_in) {
    const std::size_t axis = s.axis(axis_in);
    return {s.span(0, axis), s[axis], s.span(axis + 1, s.rank())};
}

}  // namespace

Value softmax(const Value& input, int axis) {
    const AxisSplit a = split_axis(input.shape(), axis);
    const auto x = input.data();
    std::vector<double> out(x.size());
    for (std::size_t o = 0; o < a.outer; ++o) {
        for (std::size_t i = 0; i < a.inner; ++i) {
            const std::size_t base = o * a.extent * a.inner + i;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < a.extent; ++k) mx = std::max(mx, x[base + k * a.inner]);
            double z = 0.0;
            for (std::size_t k = 0; k < a.extent; ++k) {
                const double e = std::exp(x[base + k * a.inner] - mx);
                out[base + k * a.inner] = e;
                z += e;
            }
            for (std::size_t k = 0; k < a.extent; ++k) out[base + k * a.inner] /= z;
        }
    }
    return make_result(input.shape(), std::move(out), {input},
                       [a](Node& self) {
                           auto gx = grad_of(parent(self, 0));
                           const auto& y = self.data;
                           const auto& g = self.grad;
                           for (std::size_t o = 0; o < a.outer; ++o) {
                               for (std::size_t i = 0; i < a.inner; ++i) {
                                   const std::size_t base = o * a.extent * a.inner + i;
                                   double dot = 0.0;
                                   for (std::size_t k = 0; k < a.extent; ++k) {
                                       dot += g[base + k * a.inner] * y[base + k * a.inner];
                                   }
                                   for (std::size_t k = 0; k < a.extent; ++k) {
                                       const std::size_t j = base + k * a.inner;
                                       gx[j] += y[j] * (g[j] - dot);
                                   }
                               }
                           }
                       },
                       "softmax");
}

Value log_softmax(const Value& input, int axis) {
    const AxisSplit a = split_axis(input.shape(), axis);
    const auto x = input.data();
    std::vector<double> out(x.size());
    for (std::size_t o = 0; o < a.outer; ++o) {
        for (std::size_t i = 0; i < a.inner; ++i) {
            const std::size_t base = o * a.extent * a.inner + i;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < a.extent; ++k) mx = std::max(mx, x[base + k * a.inner]);
            double z = 0.0;
            for (std::size_t k = 0; k < a.extent; ++k) z += std::exp(x[base + k * a.inner] - mx);
            const double lz = mx + std::log(z);
            for (std::size_t k = 0; k < a.extent; ++k) out[base + k * a.inner] = x[base + k * a.inner] - lz;
        }
    }
    return make_result(input.shape(), std::move(out), {input},
                       [a](Node& self) {
                           auto gx = grad_of(parent(self, 0));
                           const auto& y = self.data;
                           const auto& g = self.grad;
                           for (std::size_t o = 0; o < a.outer; ++o) {
                               for (std::size_t i = 0; i < a.inner; ++i) {
                                   const std::size_t base = o * a.extent * a.inner + i;
                                   double gs = 0.0;
                                   for (std::size_t k = 0; k < a.extent; ++k) gs += g[base + k * a.inner];
                                   for (std::size_t k = 0; k < a.extent; ++k) {
                                       const std::size_t j = base + k * a.inner;
                                       gx[j] += g[j] - std::exp(y[j]) * gs;
                                   }
                               }
                           }
                       },
                       "log_softmax");
}

Value affine(const Value& input, const Value& weight, const Value& bias) {
    const Shape& xs = input.shape();
    const Shape& ws = weight.shape();
    if (ws.rank() != 2 || xs[xs.rank() - 1] != ws[1]) {
        throw ShapeError("affine: input " + xs.str() + " incompatible with weight " + ws.str());
    }
    const std::size_t in = ws[1], out_f = ws[0];
    const std::size_t rows = input.numel() / in;
    const bool has_bias = bias.defined();
    if (has_bias && bias.numel() != out_f) {
        throw ShapeError("affine: bias " + bias.shape().str() + " does not match weight " + ws.str());
    }
    std::vector<std::size_t> dims = xs.dims();
    dims.back() = out_f;
    std::vector<double> out(rows * out_f, 0.0);
    if (has_bias) {
        for (std::size_t r = 0; r < rows; ++r) std::copy_n(bias.data().data(), out_f, out.data() + r * out_f);
    }
    const std::vector<double> wt = transpose(weight.data().data(), out_f, in);
    kt().gemm(rows, out_f, in, input.data().data(), in, wt.data(), out_f, out.data(), out_f);

    std::vector<Value> parents{input, weight};
    if (has_bias) parents.push_back(bias);
    return make_result(Shape(std::move(dims)), std::move(out), std::move(parents),
                       [rows, in, out_f, has_bias](Node& self) {
                           Node& px = parent(self, 0);
                           Node& pw = parent(self, 1);
                           const double* dy = self.grad.data();
                           if (auto dx = grad_of(px); !dx.empty()) {
                               kt().gemm(rows, in, out_f, dy, out_f, pw.data.data(), in, dx.data(), in);
                           }
                           if (auto dw = grad_of(pw); !dw.empty()) {
                               const std::vector<double> dyt = transpose(dy, rows, out_f);
                               kt().gemm(out_f, in, rows, dyt.data(), rows, px.data.data(), in, dw.data(), in);
                           }
                           if (has_bias) {
                               if (auto db = grad_of(parent(self, 2)); !db.empty()) {
                                   for (std::size_t r = 0; r < rows; ++r) {
                                       for (std::size_t j = 0; j < out_f; ++j) db[j] += dy[r * out_f + j];
                                   }
                               }
                           }
                       },
                       "affine");
}

Value dropout(const Value& input, double p, Rng& rng, bool train) {
    if (!train || p <= 0.0) return input;
    if (p >= 1.0) throw std::invalid_argument("dropout: p must be < 1");
    const double keep = 1.0 / (1.0 - p);
    std::vector<double> mask(input.numel());
    for (auto& m : mask) m = rng.bernoulli(p) ? 0.0 : keep;
    const Value m = Value::constant(input.shape(), std::move(mask));
    return mul(input, m);
}

}  // namespace snn::ops
