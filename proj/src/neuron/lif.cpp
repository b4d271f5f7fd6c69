#include "snn/neuron/lif.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "snn/core/error.hpp"
#include "snn/kernels/kernels.hpp"
#include "snn/tensor/ops.hpp"

namespace snn::neuron {

using snn::detail::make_result;
using snn::detail::parent;

double surrogate_grad(double x, const Surrogate& s) {
    if (const auto* a = std::get_if<ATan>(&s)) {
        const double z = std::numbers::pi * a->alpha * x / 2.0;
        return a->alpha / (2.0 * (1.0 + z * z));
    }
    const auto& r = std::get<RectWindow>(s);
    return std::abs(x) <= r.width / 2.0 ? 1.0 : 0.0;
}

double surrogate_primitive(double x, const Surrogate& s) {
    if (const auto* a = std::get_if<ATan>(&s)) {
        return std::atan(std::numbers::pi * a->alpha * x / 2.0) / std::numbers::pi + 0.5;
    }
    const auto& r = std::get<RectWindow>(s);
    const double v = x + r.width / 2.0;
    return std::clamp(v, 0.0, r.width);
}

std::string describe(const Surrogate& s) {
    std::ostringstream os;
    if (const auto* a = std::get_if<ATan>(&s)) {
        os << "atan(" << a->alpha << ")";
    } else {
        os << "rect(" << std::get<RectWindow>(s).width << ")";
    }
    return os.str();
}

void NeuronConfig::validate() const {
    if (!(tau > 0.0)) throw ConfigError("neuron: tau must be > 0");
    if (!(u_threshold > u_reset)) throw ConfigError("neuron: u_threshold must exceed u_reset");
    if (const auto* a = std::get_if<ATan>(&surrogate); a && !(a->alpha > 0.0)) {
        throw ConfigError("neuron: atan alpha must be > 0");
    }
    if (const auto* r = std::get_if<RectWindow>(&surrogate); r && !(r->width > 0.0)) {
        throw ConfigError("neuron: rect width must be > 0");
    }
}

NeuronState NeuronState::reset(const Shape& shape, const NeuronConfig& config) {
    return NeuronState{Value::constant(shape, config.u_reset)};
}

Value spike(const Value& x, const Surrogate& surrogate, bool smooth) {
    const auto xs = x.data();
    std::vector<double> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        out[i] = smooth ? surrogate_primitive(xs[i], surrogate) : (xs[i] >= 0.0 ? 1.0 : 0.0);
    }
    return make_result(x.shape(), std::move(out), {x},
                       [surrogate](Node& self) {
                           Node& p = parent(self, 0);
                           auto g = p.grad_buffer();
                           for (std::size_t i = 0; i < g.size(); ++i) {
                               g[i] += self.grad[i] * surrogate_grad(p.data[i], surrogate);
                           }
                       },
                       "spike");
}

StepResult lif_step(const Value& input, const NeuronState& state, const NeuronConfig& config) {
    if (input.shape() != state.hidden.shape()) {
        throw ShapeError("lif_step: input " + input.shape().str() + " does not match state " +
                         state.hidden.shape().str());
    }
    const Value& h = state.hidden;
    const Value leak = ops::sub(input, ops::add_scalar(h, -config.u_reset));
    const Value u = ops::add(h, ops::scale(leak, 1.0 / config.tau));
    const Value s = spike(ops::add_scalar(u, -config.u_threshold), config.surrogate, config.smooth_forward);
    const Value gate = config.detach_reset ? ops::detach(ops::add_scalar(ops::neg(s), 1.0))
                                           : ops::add_scalar(ops::neg(s), 1.0);
    const Value h_next = ops::mul(u, gate);
    return {s, NeuronState{h_next}, u};
}

namespace {

struct TimeSplit {
    std::size_t outer, steps, inner;
    std::vector<std::size_t> step_dims;
};

TimeSplit split_time(const Shape& s, int time_axis) {
    const std::size_t axis = s.axis(time_axis);
    TimeSplit t{s.span(0, axis), s[axis], s.span(axis + 1, s.rank()), {}};
    t.step_dims = s.dims();
    t.step_dims.erase(t.step_dims.begin() + static_cast<std::ptrdiff_t>(axis));
    if (t.step_dims.empty()) t.step_dims.push_back(1);
    return t;
}

}  // namespace

Value run_sequence(const Value& inputs, const NeuronConfig& config, int time_axis) {
    const TimeSplit ts = split_time(inputs.shape(), time_axis);
    const std::size_t axis = inputs.shape().axis(time_axis);
    NeuronState state = NeuronState::reset(Shape(ts.step_dims), config);
    std::vector<Value> spikes;
    spikes.reserve(ts.steps);
    for (std::size_t t = 0; t < ts.steps; ++t) {
        Value it = ops::select(inputs, static_cast<int>(axis), t);
        StepResult r = lif_step(it, state, config);
        spikes.push_back(r.spikes);
        state = r.state;
    }
    return ops::stack(spikes, static_cast<int>(axis));
}

Value lif_sequence(const Value& inputs, const NeuronConfig& config, int time_axis) {
    const TimeSplit ts = split_time(inputs.shape(), time_axis);
    const std::size_t n = inputs.numel();
    const kernels::LifConstants k{1.0 / config.tau, config.u_reset, config.u_threshold};
    const auto& kt = kernels::active();

    std::vector<double> spikes(n), membrane(n);
    std::vector<double> h(ts.inner), h_next(ts.inner);
    const double* x = inputs.data().data();
    for (std::size_t o = 0; o < ts.outer; ++o) {
        std::fill(h.begin(), h.end(), config.u_reset);
        for (std::size_t t = 0; t < ts.steps; ++t) {
            const std::size_t off = (o * ts.steps + t) * ts.inner;
            if (config.smooth_forward) {
                for (std::size_t i = 0; i < ts.inner; ++i) {
                    const double u = h[i] + (x[off + i] - (h[i] - k.u_reset)) * k.inv_tau;
                    const double s = surrogate_primitive(u - k.u_threshold, config.surrogate);
                    membrane[off + i] = u;
                    spikes[off + i] = s;
                    h_next[i] = u * (1.0 - s);
                }
            } else {
                kt.lif_step(ts.inner, h.data(), x + off, k, membrane.data() + off, spikes.data() + off,
                            h_next.data());
            }
            std::swap(h, h_next);
        }
    }

    const NeuronConfig cfg = config;
    return make_result(
        inputs.shape(), std::move(spikes), {inputs},
        [ts, cfg, membrane = std::move(membrane)](Node& self) {
            auto dx = parent(self, 0).grad_buffer();
            const double inv_tau = 1.0 / cfg.tau;
            std::vector<double> gh(ts.inner);
            for (std::size_t o = 0; o < ts.outer; ++o) {
                std::fill(gh.begin(), gh.end(), 0.0);
                for (std::size_t t = ts.steps; t-- > 0;) {
                    const std::size_t off = (o * ts.steps + t) * ts.inner;
                    for (std::size_t i = 0; i < ts.inner; ++i) {
                        const double u = membrane[off + i];
                        const double s = self.data[off + i];
                        const double sg = surrogate_grad(u - cfg.u_threshold, cfg.surrogate);
                        double du = self.grad[off + i] * sg + gh[i] * (1.0 - s);
                        if (!cfg.detach_reset) du -= gh[i] * u * sg;
                        dx[off + i] += du * inv_tau;
                        gh[i] = du * (1.0 - inv_tau);
                    }
                }
            }
        },
        "lif_sequence");
}

}  // namespace snn::neuron
