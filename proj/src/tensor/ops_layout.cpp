#include <numeric>

#include "ops_internal.hpp"
#include "snn/tensor/ops.hpp"

namespace snn::ops {

using namespace detail;

Value sum(const Value& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    return make_result(Shape{1}, {s}, {a},
                       [](Node& self) {
                           auto gp = grad_of(parent(self, 0));
                           const double g = self.grad[0];
                           for (auto& v : gp) v += g;
                       },
                       "sum");
}

Value mean(const Value& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Value sum_axis(const Value& a, int axis_in, bool keepdim) {
    const Shape& s = a.shape();
    const std::size_t axis = s.axis(axis_in);
    const std::size_t outer = s.span(0, axis);
    const std::size_t extent = s[axis];
    const std::size_t inner = s.span(axis + 1, s.rank());

    std::vector<std::size_t> dims = s.dims();
    if (keepdim) {
        dims[axis] = 1;
    } else {
        dims.erase(dims.begin() + static_cast<std::ptrdiff_t>(axis));
        if (dims.empty()) dims.push_back(1);
    }
    std::vector<double> out(outer * inner, 0.0);
    const auto x = a.data();
    for (std::size_t o = 0; o < outer; ++o) {
        double* dst = out.data() + o * inner;
        for (std::size_t k = 0; k < extent; ++k) {
            const double* src = x.data() + (o * extent + k) * inner;
            for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
        }
    }
    return make_result(Shape(std::move(dims)), std::move(out), {a},
                       [outer, extent, inner](Node& self) {
                           auto gp = grad_of(parent(self, 0));
                           for (std::size_t o = 0; o < outer; ++o) {
                               const double* g = self.grad.data() + o * inner;
                               for (std::size_t k = 0; k < extent; ++k) {
                                   double* dst = gp.data() + (o * extent + k) * inner;
                                   for (std::size_t i = 0; i < inner; ++i) dst[i] += g[i];
                               }
                           }
                       },
                       "sum_axis");
}

Value mean_axis(const Value& a, int axis, bool keepdim) {
    const std::size_t extent = a.shape()[a.shape().axis(axis)];
    return scale(sum_axis(a, axis, keepdim), 1.0 / static_cast<double>(extent));
}

Value reshape(const Value& a, Shape shape) {
    if (shape.numel() != a.numel()) {
        throw ShapeError("reshape: cannot view " + a.shape().str() + " as " + shape.str());
    }
    std::vector<double> out(a.data().begin(), a.data().end());
    return make_result(std::move(shape), std::move(out), {a},
                       [](Node& self) {
                           auto gp = grad_of(parent(self, 0));
                           kt().axpy(gp.size(), 1.0, self.grad.data(), gp.data());
                       },
                       "reshape");
}

Value permute(const Value& a, const std::vector<std::size_t>& order) {
    const Shape& s = a.shape();
    const std::size_t r = s.rank();
    if (order.size() != r) throw ShapeError("permute: order length differs from rank of " + s.str());
    std::vector<bool> used(r, false);
    for (auto o : order) {
        if (o >= r || used[o]) throw ShapeError("permute: invalid axis order for " + s.str());
        used[o] = true;
    }
    std::vector<std::size_t> in_strides(r);
    std::size_t st = 1;
    for (std::size_t i = r; i-- > 0;) {
        in_strides[i] = st;
        st *= s[i];
    }
    std::vector<std::size_t> dims(r), src_strides(r);
    for (std::size_t i = 0; i < r; ++i) {
        dims[i] = s[order[i]];
        src_strides[i] = in_strides[order[i]];
    }
    // map[i] = flat source offset of output element i
    std::vector<std::size_t> map(a.numel());
    std::vector<std::size_t> zero(r, 0);
    for_each_broadcast(dims, src_strides, zero, [&](std::size_t i, std::size_t off, std::size_t) { map[i] = off; });
    std::vector<double> out(a.numel());
    const auto x = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[map[i]];
    return make_result(Shape(std::move(dims)), std::move(out), {a},
                       [map = std::move(map)](Node& self) {
                           auto gp = grad_of(parent(self, 0));
                           for (std::size_t i = 0; i < map.size(); ++i) gp[map[i]] += self.grad[i];
                       },
                       "permute");
}

Value stack(const std::vector<Value>& parts, int axis_in) {
    if (parts.empty()) throw ShapeError("stack: no inputs");
    const Shape& s = parts.front().shape();
    for (const auto& p : parts) {
        if (p.shape() != s) throw ShapeError("stack: mismatched shapes " + s.str() + " and " + p.shape().str());
    }
    const int r = static_cast<int>(s.rank()) + 1;
    const int a = axis_in < 0 ? axis_in + r : axis_in;
    if (a < 0 || a >= r) throw ShapeError("stack: axis out of range");
    const std::size_t axis = static_cast<std::size_t>(a);
    const std::size_t outer = s.span(0, axis);
    const std::size_t inner = s.span(axis, s.rank());
    const std::size_t n = parts.size();

    std::vector<std::size_t> dims = s.dims();
    dims.insert(dims.begin() + static_cast<std::ptrdiff_t>(axis), n);
    std::vector<double> out(outer * n * inner);
    for (std::size_t k = 0; k < n; ++k) {
        const auto x = parts[k].data();
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy_n(x.data() + o * inner, inner, out.data() + (o * n + k) * inner);
        }
    }
    return make_result(Shape(std::move(dims)), std::move(out), parts,
                       [outer, inner, n](Node& self) {
                           for (std::size_t k = 0; k < n; ++k) {
                               auto gp = grad_of(parent(self, k));
                               if (gp.empty()) continue;
                               for (std::size_t o = 0; o < outer; ++o) {
                                   kt().axpy(inner, 1.0, self.grad.data() + (o * n + k) * inner,
                                             gp.data() + o * inner);
                               }
                           }
                       },
                       "stack");
}

Value select(const Value& a, int axis_in, std::size_t index) {
    const Shape& s = a.shape();
    const std::size_t axis = s.axis(axis_in);
    if (index >= s[axis]) {
        throw ShapeError("select: index " + std::to_string(index) + " out of range for " + s.str());
    }
    const std::size_t outer = s.span(0, axis);
    const std::size_t extent = s[axis];
    const std::size_t inner = s.span(axis + 1, s.rank());
    std::vector<std::size_t> dims = s.dims();
    dims.erase(dims.begin() + static_cast<std::ptrdiff_t>(axis));
    if (dims.empty()) dims.push_back(1);
    std::vector<double> out(outer * inner);
    const auto x = a.data();
    for (std::size_t o = 0; o < outer; ++o) {
        std::copy_n(x.data() + (o * extent + index) * inner, inner, out.data() + o * inner);
    }
    return make_result(Shape(std::move(dims)), std::move(out), {a},
                       [outer, extent, inner, index](Node& self) {
                           auto gp = grad_of(parent(self, 0));
                           for (std::size_t o = 0; o < outer; ++o) {
                               kt().axpy(inner, 1.0, self.grad.data() + o * inner,
                                         gp.data() + (o * extent + index) * inner);
                           }
                       },
                       "select");
}

Value gather(const Value& a, std::vector<std::size_t> source, Shape shape) {
    if (source.size() != shape.numel()) throw ShapeError("gather: index count differs from " + shape.str());
    const auto x = a.data();
    std::vector<double> out(source.size());
    for (std::size_t i = 0; i < source.size(); ++i) {
        if (source[i] >= x.size()) throw ShapeError("gather: source index out of range");
        out[i] = x[source[i]];
    }
    return make_result(std::move(shape), std::move(out), {a},
                       [source = std::move(source)](Node& self) {
                           auto gp = grad_of(parent(self, 0));
                           for (std::size_t i = 0; i < source.size(); ++i) gp[source[i]] += self.grad[i];
                       },
                       "gather");
}

}  // namespace snn::ops
