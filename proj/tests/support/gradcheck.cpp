#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "snn/attention/azo.hpp"
#include "snn/attention/sma.hpp"
#include "snn/neuron/lif.hpp"
#include "snn/tensor/ops.hpp"
#include "snn/train/loss.hpp"

namespace snn::testing {

namespace {

std::vector<double> draw(std::size_t n, Rng& rng, double lo, double hi) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

double eval_scalar(const Objective& f, const std::vector<Value>& inputs) {
    NoGradGuard g;
    return f(inputs).item();
}

}  // namespace

Value random_param(Shape shape, Rng& rng, double lo, double hi) {
    const std::size_t n = shape.numel();
    return Value::parameter(std::move(shape), draw(n, rng, lo, hi));
}

Value random_const(Shape shape, Rng& rng, double lo, double hi) {
    const std::size_t n = shape.numel();
    return Value::constant(std::move(shape), draw(n, rng, lo, hi));
}

Value project(const Value& out, std::uint64_t seed) {
    Rng rng(seed);
    return ops::sum(ops::mul(out, random_const(out.shape(), rng)));
}

GradCheckReport gradcheck(const Objective& f, const std::vector<Value>& inputs, Rng& rng, std::size_t probes,
                          double step) {
    for (auto v : inputs) v.zero_grad();
    backward(f(inputs));
    std::vector<std::vector<double>> analytic;
    std::size_t total = 0;
    for (const auto& v : inputs) {
        const auto g = v.grad();
        analytic.emplace_back(g.begin(), g.end());
        total += v.numel();
    }

    GradCheckReport rep;
    for (std::size_t p = 0; p < probes; ++p) {
        std::size_t flat = rng.below(total), which = 0;
        while (flat >= inputs[which].numel()) flat -= inputs[which++].numel();
        Value v = inputs[which];
        double& x = v.mutable_data()[flat];
        const double saved = x;
        x = saved + step;
        const double up = eval_scalar(f, inputs);
        x = saved - step;
        const double down = eval_scalar(f, inputs);
        x = saved;
        const double numeric = (up - down) / (2.0 * step);
        const double a = analytic[which][flat];
        const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
        if (err >= rep.worst) {
            rep.worst = err;
            rep.where = "input " + std::to_string(which) + " index " + std::to_string(flat) + " analytic " +
                        std::to_string(a) + " numeric " + std::to_string(numeric);
        }
        ++rep.probes;
    }
    return rep;
}

namespace {

using Inputs = std::vector<Value>;

/// Case over freshly drawn parameter inputs: out = op(inputs), objective = project(out).
GradCase unary_case(std::string name, std::vector<Shape> shapes, std::function<Value(const Inputs&)> op,
                    double lo = -1.0, double hi = 1.0) {
    return {name, [shapes, op, lo, hi](std::uint64_t seed) {
                Rng rng(seed);
                Inputs in;
                for (const auto& s : shapes) in.push_back(random_param(s, rng, lo, hi));
                const std::uint64_t pseed = rng.next();
                return gradcheck([&](const Inputs& v) { return project(op(v), pseed); }, in, rng);
            }};
}

}  // namespace

std::vector<GradCase> gradient_cases() {
    std::vector<GradCase> c;
    const Shape s23{2, 3};

    c.push_back(unary_case("add", {s23, Shape{3}}, [](const Inputs& v) { return ops::add(v[0], v[1]); }));
    c.push_back(unary_case("sub", {Shape{2, 1, 3}, Shape{4, 1}}, [](const Inputs& v) { return ops::sub(v[0], v[1]); }));
    c.push_back(unary_case("mul", {Shape{3, 1, 2, 2}, Shape{3, 4, 2, 2}},
                           [](const Inputs& v) { return ops::mul(v[0], v[1]); }));
    c.push_back(unary_case("neg", {s23}, [](const Inputs& v) { return ops::neg(v[0]); }));
    c.push_back(unary_case("scale", {s23}, [](const Inputs& v) { return ops::scale(v[0], -2.5); }));
    c.push_back(unary_case("add_scalar", {s23}, [](const Inputs& v) { return ops::add_scalar(v[0], 0.7); }));
    c.push_back(unary_case("relu", {Shape{4, 5}}, [](const Inputs& v) { return ops::relu(v[0]); }));
    c.push_back(unary_case("square", {s23}, [](const Inputs& v) { return ops::square(v[0]); }));
    c.push_back(unary_case("exp", {s23}, [](const Inputs& v) { return ops::exp(v[0]); }));
    c.push_back(unary_case("log", {s23}, [](const Inputs& v) { return ops::log(v[0]); }, 0.5, 2.0));
    c.push_back(unary_case("sum", {s23}, [](const Inputs& v) { return ops::scale(ops::sum(ops::square(v[0])), 1.0); }));
    c.push_back(unary_case("mean", {s23}, [](const Inputs& v) { return ops::mean(ops::exp(v[0])); }));
    c.push_back(unary_case("sum_axis", {Shape{2, 3, 4}}, [](const Inputs& v) { return ops::sum_axis(v[0], 1); }));
    c.push_back(unary_case("mean_axis", {Shape{2, 3, 4}},
                           [](const Inputs& v) { return ops::mean_axis(v[0], -1, true); }));
    c.push_back(unary_case("reshape", {Shape{2, 6}}, [](const Inputs& v) { return ops::reshape(v[0], Shape{3, 4}); }));
    c.push_back(unary_case("permute", {Shape{2, 3, 4}},
                           [](const Inputs& v) { return ops::permute(v[0], {2, 0, 1}); }));
    c.push_back(unary_case("stack", {s23, s23, s23}, [](const Inputs& v) { return ops::stack(v, 1); }));
    c.push_back(unary_case("select", {Shape{3, 4, 2}}, [](const Inputs& v) { return ops::select(v[0], 1, 2); }));
    c.push_back(unary_case("gather", {Shape{2, 3}}, [](const Inputs& v) {
        return ops::gather(v[0], {5, 0, 0, 3, 2, 2, 1, 4}, Shape{2, 4});
    }));
    c.push_back(unary_case("conv2d", {Shape{2, 3, 5, 5}, Shape{4, 3, 3, 3}, Shape{4}}, [](const Inputs& v) {
        return ops::conv2d(v[0], v[1], v[2], 1, 1);
    }));
    c.push_back(unary_case("conv2d_strided", {Shape{1, 2, 6, 6}, Shape{3, 2, 3, 3}}, [](const Inputs& v) {
        return ops::conv2d(v[0], v[1], Value(), 2, 1);
    }));
    c.push_back(unary_case("conv2d_k5", {Shape{2, 2, 5, 4}, Shape{2, 2, 5, 5}}, [](const Inputs& v) {
        return ops::conv2d(v[0], v[1], Value(), 1, 2);
    }));
    c.push_back({"batch_norm_train", [](std::uint64_t seed) {
                     Rng rng(seed);
                     Inputs in{random_param(Shape{2, 3, 3, 2, 2}, rng, -2, 2), random_param(Shape{3}, rng, 0.5, 1.5),
                               random_param(Shape{3}, rng)};
                     const std::uint64_t p = rng.next();
                     ops::BatchNormStats st(3);
                     return gradcheck(
                         [&](const Inputs& v) { return project(ops::batch_norm(v[0], v[1], v[2], st, {}), p); }, in,
                         rng);
                 }});
    c.push_back({"batch_norm_eval", [](std::uint64_t seed) {
                     Rng rng(seed);
                     Inputs in{random_param(Shape{2, 3, 2, 2}, rng), random_param(Shape{3}, rng, 0.5, 1.5),
                               random_param(Shape{3}, rng)};
                     const std::uint64_t p = rng.next();
                     ops::BatchNormStats st(3);
                     st.running_mean = {0.1, -0.2, 0.3};
                     st.running_var = {0.5, 1.5, 2.0};
                     ops::BatchNormOptions o;
                     o.train = false;
                     return gradcheck(
                         [&](const Inputs& v) { return project(ops::batch_norm(v[0], v[1], v[2], st, o), p); }, in,
                         rng);
                 }});
    c.push_back(unary_case("max_pool2d", {Shape{2, 2, 4, 4}},
                           [](const Inputs& v) { return ops::max_pool2d(v[0], 2, 2, 0); }));
    c.push_back(unary_case("max_pool2d_padded", {Shape{1, 2, 5, 5}},
                           [](const Inputs& v) { return ops::max_pool2d(v[0], 3, 2, 1); }));
    c.push_back(unary_case("avg_pool_global", {Shape{2, 3, 3, 4}},
                           [](const Inputs& v) { return ops::avg_pool_global(v[0]); }));
    c.push_back(unary_case("avg_pool2d", {Shape{2, 2, 4, 4}}, [](const Inputs& v) { return ops::avg_pool2d(v[0], 2); }));
    c.push_back(unary_case("softmax", {Shape{3, 4}}, [](const Inputs& v) { return ops::softmax(v[0], -1); }, -3, 3));
    c.push_back(unary_case("softmax_axis0", {Shape{4, 3, 2}},
                           [](const Inputs& v) { return ops::softmax(v[0], 0); }, -3, 3));
    c.push_back(unary_case("log_softmax", {Shape{3, 5}},
                           [](const Inputs& v) { return ops::log_softmax(v[0], 1); }, -3, 3));
    c.push_back(unary_case("affine", {Shape{2, 3, 4}, Shape{5, 4}, Shape{5}},
                           [](const Inputs& v) { return ops::affine(v[0], v[1], v[2]); }));
    c.push_back(unary_case("dropout", {Shape{4, 6}}, [](const Inputs& v) {
        Rng r(5);
        return ops::dropout(v[0], 0.4, r, true);
    }));
    c.push_back(unary_case("spike_smooth", {Shape{10}}, [](const Inputs& v) {
        return neuron::spike(v[0], neuron::ATan{}, true);
    }, -2, 2));
    c.push_back({"lif_sequence_bptt", [](std::uint64_t seed) {
                     Rng rng(seed);
                     Inputs in{random_param(Shape{2, 2, 3}, rng, 0.0, 3.0)};
                     neuron::NeuronConfig cfg;
                     cfg.smooth_forward = true;
                     cfg.detach_reset = false;
                     const std::uint64_t p = rng.next();
                     return gradcheck([&](const Inputs& v) { return project(neuron::lif_sequence(v[0], cfg, 1), p); },
                                      in, rng);
                 }});
    c.push_back({"run_sequence_bptt", [](std::uint64_t seed) {
                     Rng rng(seed);
                     Inputs in{random_param(Shape{3, 4}, rng, 0.0, 3.0)};
                     neuron::NeuronConfig cfg;
                     cfg.smooth_forward = true;
                     cfg.detach_reset = false;
                     const std::uint64_t p = rng.next();
                     return gradcheck([&](const Inputs& v) { return project(neuron::run_sequence(v[0], cfg, 0), p); },
                                      in, rng);
                 }});
    c.push_back({"sma_apply", [](std::uint64_t seed) {
                     Rng rng(seed);
                     Inputs in{random_param(Shape{2, 3, 2, 4, 2, 2}, rng), random_param(Shape{2, 3, 2}, rng),
                               random_param(Shape{2, 2, 3, 4}, rng)};
                     const std::uint64_t p = rng.next();
                     return gradcheck(
                         [&](const Inputs& v) { return project(attention::sma_apply(v[0], v[1], v[2]), p); }, in, rng);
                 }});
    c.push_back({"azo_apply", [](std::uint64_t seed) {
                     Rng rng(seed);
                     Inputs in{random_param(Shape{2, 4, 4, 2, 2}, rng)};
                     const Value wa = ops::softmax(random_const(Shape{2, 3, 4}, rng), 1);
                     const Value wb = ops::softmax(random_const(Shape{2, 4, 3, 4}, rng), 2);
                     attention::AzoConfig cfg;
                     cfg.rtr = 2;
                     cfg.rcr = 2;
                     const std::uint64_t p = rng.next();
                     return gradcheck(
                         [&](const Inputs& v) { return project(attention::azo_apply(v[0], wa, wb, cfg, true), p); },
                         in, rng);
                 }});
    c.push_back({"sma_module_relu", [](std::uint64_t seed) {
                     Rng rng(seed);
                     attention::SmaConfig cfg;
                     cfg.kernels = {1, 3, 5};
                     cfg.cr = 2;
                     cfg.tr = 2;
                     auto mod = std::make_shared<attention::SmaModule>(4, 4, cfg, rng);
                     ParamRefs refs;
                     mod->collect("sma", refs);
                     Inputs in{random_param(Shape{2, 4, 4, 4, 4}, rng, 0.0, 2.0)};
                     for (auto& p : refs.params) {
                         for (auto& x : p.value.mutable_data()) x += rng.uniform(-0.2, 0.2);
                         in.push_back(p.value);
                     }
                     const std::uint64_t p = rng.next();
                     return gradcheck([&, mod](const Inputs& v) { return project(mod->forward(v[0], true).z, p); }, in,
                                      rng);
                 }});
    c.push_back(unary_case("loss_rate_mse", {Shape{3, 4, 5}}, [](const Inputs& v) {
        return train::loss_rate_mse(v[0], {0, 4, 2});
    }));
    c.push_back(unary_case("loss_timestep_ce", {Shape{3, 4, 5}}, [](const Inputs& v) {
        return train::loss_timestep_ce(v[0], {1, 3, 0});
    }, -3, 3));
    c.push_back(unary_case("loss_label_smooth_ce", {Shape{3, 4, 5}}, [](const Inputs& v) {
        return train::loss_label_smooth_ce(v[0], {2, 2, 4}, 0.1);
    }, -3, 3));
    return c;
}

}  // namespace snn::testing
