#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "ops_internal.hpp"
#include "snn/tensor/ops.hpp"

namespace snn::ops {
namespace detail {

std::vector<std::size_t> broadcast_strides(const std::vector<std::size_t>& dims,
                                           const std::vector<std::size_t>& out) {
    std::vector<std::size_t> strides(out.size(), 0);
    const std::size_t shift = out.size() - dims.size();
    std::size_t stride = 1;
    for (std::size_t i = dims.size(); i-- > 0;) {
        strides[i + shift] = (dims[i] == 1 && out[i + shift] != 1) ? 0 : stride;
        stride *= dims[i];
    }
    return strides;
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    const std::size_t r = std::max(a.rank(), b.rank());
    std::vector<std::size_t> out(r);
    for (std::size_t i = 0; i < r; ++i) {
        const std::size_t da = i < r - a.rank() ? 1 : a[i - (r - a.rank())];
        const std::size_t db = i < r - b.rank() ? 1 : b[i - (r - b.rank())];
        if (da != db && da != 1 && db != 1) {
            throw ShapeError(std::string(op) + ": shapes " + a.str() + " and " + b.str() +
                             " are not broadcastable");
        }
        out[i] = std::max(da, db);
    }
    return Shape(std::move(out));
}

void for_each_broadcast(const std::vector<std::size_t>& out, const std::vector<std::size_t>& sa,
                        const std::vector<std::size_t>& sb,
                        const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
    const std::size_t r = out.size();
    std::size_t total = 1;
    for (auto d : out) total *= d;
    std::vector<std::size_t> idx(r, 0);
    std::size_t oa = 0, ob = 0;
    for (std::size_t i = 0; i < total; ++i) {
        fn(i, oa, ob);
        for (std::size_t ax = r; ax-- > 0;) {
            ++idx[ax];
            oa += sa[ax];
            ob += sb[ax];
            if (idx[ax] < out[ax]) break;
            oa -= sa[ax] * out[ax];
            ob -= sb[ax] * out[ax];
            idx[ax] = 0;
        }
    }
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    static const std::size_t workers = [] {
        const char* env = std::getenv("SNN_THREADS");
        long v = env ? std::strtol(env, nullptr, 10) : 1;
        return static_cast<std::size_t>(std::max(1L, v));
    }();
    const std::size_t w = std::min(workers, n);
    if (w <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::jthread> pool;
    pool.reserve(w);
    for (std::size_t t = 0; t < w; ++t) {
        pool.emplace_back([&, t] {
            for (std::size_t i = t; i < n; i += w) fn(i);
        });
    }
}

}  // namespace detail

using namespace detail;

namespace {

enum class BinOp { Add, Sub, Mul };

Value binary(const Value& a, const Value& b, BinOp kind, const char* name) {
    if (a.shape() == b.shape()) {
        const std::size_t n = a.numel();
        std::vector<double> out(n);
        const double* x = a.data().data();
        const double* y = b.data().data();
        switch (kind) {
            case BinOp::Add: kt().add(n, x, y, out.data()); break;
            case BinOp::Sub:
                for (std::size_t i = 0; i < n; ++i) out[i] = x[i] - y[i];
                break;
            case BinOp::Mul: kt().mul(n, x, y, out.data()); break;
        }
        return make_result(a.shape(), std::move(out), {a, b},
                           [kind, n](Node& self) {
                               Node& pa = parent(self, 0);
                               Node& pb = parent(self, 1);
                               const double* g = self.grad.data();
                               if (auto ga = grad_of(pa); !ga.empty()) {
                                   if (kind == BinOp::Mul) {
                                       kt().mul_acc(n, g, pb.data.data(), ga.data());
                                   } else {
                                       kt().axpy(n, 1.0, g, ga.data());
                                   }
                               }
                               if (auto gb = grad_of(pb); !gb.empty()) {
                                   if (kind == BinOp::Mul) {
                                       kt().mul_acc(n, g, pa.data.data(), gb.data());
                                   } else {
                                       kt().axpy(n, kind == BinOp::Sub ? -1.0 : 1.0, g, gb.data());
                                   }
                               }
                           },
                           name);
    }

    Shape out_shape = broadcast_shape(a.shape(), b.shape(), name);
    auto sa = broadcast_strides(a.shape().dims(), out_shape.dims());
    auto sb = broadcast_strides(b.shape().dims(), out_shape.dims());
    std::vector<double> out(out_shape.numel());
    const auto x = a.data();
    const auto y = b.data();
    for_each_broadcast(out_shape.dims(), sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
        switch (kind) {
            case BinOp::Add: out[i] = x[ia] + y[ib]; break;
            case BinOp::Sub: out[i] = x[ia] - y[ib]; break;
            case BinOp::Mul: out[i] = x[ia] * y[ib]; break;
        }
    });
    auto dims = out_shape.dims();
    return make_result(std::move(out_shape), std::move(out), {a, b},
                       [kind, dims, sa, sb](Node& self) {
                           Node& pa = parent(self, 0);
                           Node& pb = parent(self, 1);
                           auto ga = grad_of(pa);
                           auto gb = grad_of(pb);
                           const auto& g = self.grad;
                           for_each_broadcast(dims, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
                               switch (kind) {
                                   case BinOp::Add:
                                       if (!ga.empty()) ga[ia] += g[i];
                                       if (!gb.empty()) gb[ib] += g[i];
                                       break;
                                   case BinOp::Sub:
                                       if (!ga.empty()) ga[ia] += g[i];
                                       if (!gb.empty()) gb[ib] -= g[i];
                                       break;
                                   case BinOp::Mul:
                                       if (!ga.empty()) ga[ia] += g[i] * pb.data[ib];
                                       if (!gb.empty()) gb[ib] += g[i] * pa.data[ia];
                                       break;
                               }
                           });
                       },
                       name);
}

/// Elementwise unary op with derivative expressed from (input, output).
template <class F, class D>
Value unary(const Value& a, F f, D df, const char* name) {
    const auto x = a.data();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
    return make_result(a.shape(), std::move(out), {a},
                       [df](Node& self) {
                           Node& p = parent(self, 0);
                           auto gp = grad_of(p);
                           for (std::size_t i = 0; i < gp.size(); ++i) {
                               gp[i] += self.grad[i] * df(p.data[i], self.data[i]);
                           }
                       },
                       name);
}

}  // namespace

Value add(const Value& a, const Value& b) { return binary(a, b, BinOp::Add, "add"); }
Value sub(const Value& a, const Value& b) { return binary(a, b, BinOp::Sub, "sub"); }
Value mul(const Value& a, const Value& b) { return binary(a, b, BinOp::Mul, "mul"); }

Value neg(const Value& a) { return scale(a, -1.0); }

Value scale(const Value& a, double s) {
    const std::size_t n = a.numel();
    std::vector<double> out(n);
    kt().scale(n, s, a.data().data(), out.data());
    return make_result(a.shape(), std::move(out), {a},
                       [s, n](Node& self) {
                           auto gp = grad_of(parent(self, 0));
                           kt().axpy(n, s, self.grad.data(), gp.data());
                       },
                       "scale");
}

Value add_scalar(const Value& a, double s) {
    return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; }, "add_scalar");
}

Value relu(const Value& a) {
    const std::size_t n = a.numel();
    std::vector<double> out(n);
    kt().relu(n, a.data().data(), out.data());
    return make_result(a.shape(), std::move(out), {a},
                       [n](Node& self) {
                           Node& p = parent(self, 0);
                           auto gp = grad_of(p);
                           kt().relu_backward(n, p.data.data(), self.grad.data(), gp.data());
                       },
                       "relu");
}

Value square(const Value& a) {
    return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; }, "square");
}

Value exp(const Value& a) {
    return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; }, "exp");
}

Value log(const Value& a) {
    return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; }, "log");
}

Value detach(const Value& a) {
    return Value::constant(a.shape(), std::vector<double>(a.data().begin(), a.data().end()));
}

}  // namespace snn::ops
