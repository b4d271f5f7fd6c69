#include "snn/attention/sma.hpp"

#include <ostream>

#include "snn/core/error.hpp"

namespace snn::attention {

using snn::detail::make_result;
using snn::detail::parent;

void SmaConfig::validate() const {
    if (kernels.size() < 2) throw ConfigError("sma: need at least 2 scales");
    for (std::size_t i = 0; i < kernels.size(); ++i) {
        if (kernels[i] < 1 || kernels[i] % 2 == 0) throw ConfigError("sma: kernel sizes must be odd and positive");
        if (i > 0 && kernels[i] <= kernels[i - 1]) throw ConfigError("sma: kernel sizes must strictly increase");
    }
    if (cr < 1 || tr < 1) throw ConfigError("sma: cr and tr must be >= 1");
    if (activation == EncoderActivation::LIF) neuron.validate();
}

void SmaConfig::check_fit(std::size_t steps, std::size_t channels) const {
    if (steps % static_cast<std::size_t>(tr) != 0) {
        throw ConfigError("sma: T=" + std::to_string(steps) + " is not divisible by tr=" + std::to_string(tr));
    }
    if (channels % static_cast<std::size_t>(cr) != 0) {
        throw ConfigError("sma: C=" + std::to_string(channels) + " is not divisible by cr=" + std::to_string(cr));
    }
}

std::vector<int> default_kernels(std::size_t n) {
    std::vector<int> k(n);
    for (std::size_t i = 0; i < n; ++i) k[i] = static_cast<int>(2 * i + 1);
    return k;
}

SmaModule::SmaModule(std::size_t steps, std::size_t channels, SmaConfig config, Rng& rng)
    : config_(std::move(config)), steps_(steps), channels_(channels) {
    config_.validate();
    config_.check_fit(steps, channels);
    const std::size_t n = scales(), c = channels, t = steps;
    const std::size_t th = time_hidden(), ch = channel_hidden();
    for (std::size_t i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(config_.kernels[i]);
        enc_kernel.push_back(kaiming_uniform(Shape{c, c, k, k}, c * k * k, rng));
        bn_gamma.push_back(Value::parameter(Shape{c}, std::vector<double>(c, 1.0)));
        bn_beta.push_back(Value::parameter(Shape{c}, std::vector<double>(c, 0.0)));
        bn_stats.emplace_back(c);
    }
    t_squeeze_w = kaiming_uniform(Shape{th, t}, t, rng);
    t_squeeze_b = Value::parameter(Shape{th}, std::vector<double>(th, 0.0));
    c_squeeze_w = kaiming_uniform(Shape{ch, c}, c, rng);
    c_squeeze_b = Value::parameter(Shape{ch}, std::vector<double>(ch, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        t_excite_w.push_back(kaiming_uniform(Shape{t, th}, th, rng));
        t_excite_b.push_back(Value::parameter(Shape{t}, std::vector<double>(t, 0.0)));
        c_excite_w.push_back(kaiming_uniform(Shape{c, ch}, ch, rng));
        c_excite_b.push_back(Value::parameter(Shape{c}, std::vector<double>(c, 0.0)));
    }
}

Value SmaModule::batched(const Value& x) const {
    const Shape& s = x.shape();
    if (s.rank() == 4) return ops::reshape(x, Shape{1, s[0], s[1], s[2], s[3]});
    if (s.rank() != 5) throw ShapeError("sma: expected [B,T,C,H,W] or [T,C,H,W], got " + s.str());
    if (s[1] != steps_ || s[2] != channels_) {
        throw ShapeError("sma: built for T=" + std::to_string(steps_) + ", C=" + std::to_string(channels_) +
                         ", got " + s.str());
    }
    return x;
}

Encoded SmaModule::encode(const Value& x_in, bool train) {
    const Value x = batched(x_in);
    std::vector<Value> parts;
    parts.reserve(scales());
    ops::BatchNormOptions bn;
    bn.train = train;
    for (std::size_t i = 0; i < scales(); ++i) {
        Value v = ops::conv2d(x, enc_kernel[i], Value(), 1, ops::same_padding(config_.kernels[i]));
        v = ops::batch_norm(v, bn_gamma[i], bn_beta[i], bn_stats[i], bn);
        v = config_.activation == EncoderActivation::ReLU ? ops::relu(v) : neuron::lif_sequence(v, config_.neuron, 1);
        parts.push_back(std::move(v));
    }
    Value m = ops::stack(parts, 1);
    Value y = ops::mean_axis(m, 1);
    return {std::move(m), std::move(y)};
}

Value SmaModule::t_mse(const Value& y_in) const {
    const Value y = batched(y_in);
    const Shape& s = y.shape();
    const Value pooled = ops::mean_axis(ops::reshape(y, Shape{s[0], s[1], s[2] * s[3] * s[4]}), -1);  // [B, T]
    const Value squeezed = ops::relu(ops::affine(pooled, t_squeeze_w, t_squeeze_b));
    std::vector<Value> heads;
    for (std::size_t i = 0; i < scales(); ++i) heads.push_back(ops::affine(squeezed, t_excite_w[i], t_excite_b[i]));
    return ops::softmax(ops::stack(heads, 1), 1);
}

Value SmaModule::c_mse(const Value& y_in) const {
    const Value y = batched(y_in);
    const Shape& s = y.shape();
    const Value pooled = ops::mean_axis(ops::reshape(y, Shape{s[0], s[1], s[2], s[3] * s[4]}), -1);  // [B, T, C]
    const Value squeezed = ops::relu(ops::affine(pooled, c_squeeze_w, c_squeeze_b));
    std::vector<Value> heads;
    for (std::size_t i = 0; i < scales(); ++i) heads.push_back(ops::affine(squeezed, c_excite_w[i], c_excite_b[i]));
    return ops::softmax(ops::stack(heads, 2), 2);
}

SmaOutput SmaModule::forward(const Value& x, bool train) {
    const Encoded e = encode(x, train);
    Value wa = t_mse(e.y);
    Value wb = c_mse(e.y);
    Value z = sma_apply(e.m, wa, wb);
    if (x.shape().rank() == 4) z = ops::reshape(z, x.shape());
    return {std::move(z), std::move(wa), std::move(wb)};
}

void SmaModule::collect(const std::string& prefix, ParamRefs& refs) {
    for (std::size_t i = 0; i < scales(); ++i) {
        const std::string p = prefix + ".enc" + std::to_string(i);
        refs.add(p + ".kernel", enc_kernel[i]);
        refs.add(p + ".bn.gamma", bn_gamma[i]);
        refs.add(p + ".bn.beta", bn_beta[i]);
        refs.add_buffer(p + ".bn.running_mean", bn_stats[i].running_mean);
        refs.add_buffer(p + ".bn.running_var", bn_stats[i].running_var);
    }
    refs.add(prefix + ".t_squeeze.weight", t_squeeze_w);
    refs.add(prefix + ".t_squeeze.bias", t_squeeze_b);
    for (std::size_t i = 0; i < scales(); ++i) {
        refs.add(prefix + ".t_excite" + std::to_string(i) + ".weight", t_excite_w[i]);
        refs.add(prefix + ".t_excite" + std::to_string(i) + ".bias", t_excite_b[i]);
    }
    refs.add(prefix + ".c_squeeze.weight", c_squeeze_w);
    refs.add(prefix + ".c_squeeze.bias", c_squeeze_b);
    for (std::size_t i = 0; i < scales(); ++i) {
        refs.add(prefix + ".c_excite" + std::to_string(i) + ".weight", c_excite_w[i]);
        refs.add(prefix + ".c_excite" + std::to_string(i) + ".bias", c_excite_b[i]);
    }
}

std::size_t SmaModule::encoder_param_count() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < scales(); ++i) n += enc_kernel[i].numel() + bn_gamma[i].numel() + bn_beta[i].numel();
    return n;
}

std::size_t SmaModule::t_mse_param_count() const {
    std::size_t n = t_squeeze_w.numel() + t_squeeze_b.numel();
    for (std::size_t i = 0; i < scales(); ++i) n += t_excite_w[i].numel() + t_excite_b[i].numel();
    return n;
}

std::size_t SmaModule::c_mse_param_count() const {
    std::size_t n = c_squeeze_w.numel() + c_squeeze_b.numel();
    for (std::size_t i = 0; i < scales(); ++i) n += c_excite_w[i].numel() + c_excite_b[i].numel();
    return n;
}

Value sma_apply(const Value& m, const Value& w_alpha, const Value& w_beta) {
    const Shape& sm = m.shape();
    if (sm.rank() != 6) throw ShapeError("sma_apply: M must be [B,N,T,C,H,W], got " + sm.str());
    const std::size_t B = sm[0], N = sm[1], T = sm[2], C = sm[3], HW = sm[4] * sm[5];
    if (w_alpha.shape() != Shape{B, N, T}) {
        throw ShapeError("sma_apply: W_alpha " + w_alpha.shape().str() + " does not match M " + sm.str());
    }
    if (w_beta.shape() != Shape{B, T, N, C}) {
        throw ShapeError("sma_apply: W_beta " + w_beta.shape().str() + " does not match M " + sm.str());
    }
    const auto md = m.data(), wa = w_alpha.data(), wb = w_beta.data();
    std::vector<double> z(B * T * C * HW, 0.0);
    // Combined weight w[b,n,t,c] = W_alpha * W_beta, then Z += M * w in scale order.
    std::vector<double> w(B * N * T * C);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t c = 0; c < C; ++c)
                    w[((b * N + n) * T + t) * C + c] = wa[(b * N + n) * T + t] * wb[((b * T + t) * N + n) * C + c];
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t c = 0; c < C; ++c) {
                    const double wv = w[((b * N + n) * T + t) * C + c];
                    const double* src = md.data() + (((b * N + n) * T + t) * C + c) * HW;
                    double* dst = z.data() + ((b * T + t) * C + c) * HW;
                    for (std::size_t i = 0; i < HW; ++i) dst[i] += src[i] * wv;
                }
    Shape out{B, T, C, sm[4], sm[5]};
    return make_result(
        std::move(out), std::move(z), {m, w_alpha, w_beta},
        [B, N, T, C, HW, w = std::move(w)](Node& self) {
            Node& pm = parent(self, 0);
            Node& pa = parent(self, 1);
            Node& pb = parent(self, 2);
            const bool need_m = pm.requires_grad, need_a = pa.requires_grad, need_b = pb.requires_grad;
            std::span<double> gm = need_m ? pm.grad_buffer() : std::span<double>{};
            std::span<double> ga = need_a ? pa.grad_buffer() : std::span<double>{};
            std::span<double> gb = need_b ? pb.grad_buffer() : std::span<double>{};
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t n = 0; n < N; ++n)
                    for (std::size_t t = 0; t < T; ++t)
                        for (std::size_t c = 0; c < C; ++c) {
                            const std::size_t wi = ((b * N + n) * T + t) * C + c;
                            const std::size_t mo = wi * HW;
                            const double* g = self.grad.data() + ((b * T + t) * C + c) * HW;
                            if (need_m) {
                                for (std::size_t i = 0; i < HW; ++i) gm[mo + i] += g[i] * w[wi];
                            }
                            if (need_a || need_b) {
                                double dw = 0.0;
                                for (std::size_t i = 0; i < HW; ++i) dw += g[i] * pm.data[mo + i];
                                const std::size_t ai = (b * N + n) * T + t;
                                const std::size_t bi = ((b * T + t) * N + n) * C + c;
                                if (need_a) ga[ai] += dw * pb.data[bi];
                                if (need_b) gb[bi] += dw * pa.data[ai];
                            }
                        }
        },
        "sma_apply");
}

std::size_t t_mse_weight_count(std::size_t t, std::size_t tr, std::size_t n) { return t * (t / tr) * (n + 1); }

std::size_t c_mse_weight_count(std::size_t c, std::size_t cr, std::size_t n) { return c * (c / cr) * (n + 1); }

std::size_t decoder_param_formula(std::size_t t, std::size_t c, std::size_t tr, std::size_t cr, std::size_t n) {
    const std::size_t biases = t / tr + n * t + c / cr + n * c;
    return t_mse_weight_count(t, tr, n) + c_mse_weight_count(c, cr, n) + biases;
}

std::vector<double> scale_importance(const Value& w_alpha, const Value& w_beta, std::size_t b) {
    const std::size_t N = w_alpha.shape()[1], T = w_alpha.shape()[2], C = w_beta.shape()[3];
    const auto wa = w_alpha.data(), wb = w_beta.data();
    std::vector<double> imp(N, 0.0);
    double total = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
        double acc = 0.0;
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t c = 0; c < C; ++c) acc += wa[(b * N + n) * T + t] * wb[((b * T + t) * N + n) * C + c];
        imp[n] = acc / static_cast<double>(T * C);
        total += imp[n];
    }
    for (double& v : imp) v /= total;
    return imp;
}

void write_alpha_header(std::ostream& os) { os << "sample,t,n,w_alpha\n"; }

void write_beta_header(std::ostream& os) { os << "sample,t,n,c,w_beta\n"; }

void write_alpha_rows(std::ostream& os, const Value& w_alpha, std::size_t b, const std::string& sample) {
    const std::size_t N = w_alpha.shape()[1], T = w_alpha.shape()[2];
    const auto wa = w_alpha.data();
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t n = 0; n < N; ++n) os << sample << ',' << t << ',' << n << ',' << wa[(b * N + n) * T + t] << '\n';
}

void write_beta_rows(std::ostream& os, const Value& w_beta, std::size_t b, const std::string& sample) {
    const std::size_t T = w_beta.shape()[1], N = w_beta.shape()[2], C = w_beta.shape()[3];
    const auto wb = w_beta.data();
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t c = 0; c < C; ++c)
                os << sample << ',' << t << ',' << n << ',' << c << ',' << wb[((b * T + t) * N + n) * C + c] << '\n';
}

}  // namespace snn::attention
