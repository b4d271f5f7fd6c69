#include "snn/train/loss.hpp"

#include "snn/core/error.hpp"
#include "snn/tensor/ops.hpp"

namespace snn::train {

void LossSpec::validate() const {
    if (kind == LossKind::LabelSmoothCE && !(smoothing >= 0.0 && smoothing < 0.5)) {
        throw ConfigError("loss: label smoothing must lie in [0, 0.5)");
    }
}

LossKind parse_loss(const std::string& s) {
    if (s == "rate_mse") return LossKind::RateMSE;
    if (s == "timestep_ce") return LossKind::TimestepCE;
    if (s == "label_smooth_ce") return LossKind::LabelSmoothCE;
    throw ConfigError("unknown loss '" + s + "' (expected rate_mse, timestep_ce or label_smooth_ce)");
}

std::string to_string(LossKind k) {
    switch (k) {
        case LossKind::RateMSE: return "rate_mse";
        case LossKind::TimestepCE: return "timestep_ce";
        case LossKind::LabelSmoothCE: return "label_smooth_ce";
    }
    return "?";
}

namespace {

struct Dims {
    Value out;  // [B, T, K]
    std::size_t b, t, k;
};

Dims batched(const Value& outputs, const std::vector<int>& labels) {
    const Shape& s = outputs.shape();
    Dims d;
    if (s.rank() == 2) {
        d = {ops::reshape(outputs, Shape{1, s[0], s[1]}), 1, s[0], s[1]};
    } else if (s.rank() == 3) {
        d = {outputs, s[0], s[1], s[2]};
    } else {
        throw ShapeError("loss: outputs must be [B,T,K] or [T,K], got " + s.str());
    }
    if (labels.size() != d.b) {
        throw ShapeError("loss: " + std::to_string(labels.size()) + " labels for batch of " + std::to_string(d.b));
    }
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= d.k) {
            throw std::invalid_argument("loss: label " + std::to_string(y) + " outside [0, " + std::to_string(d.k) + ")");
        }
    }
    return d;
}

/// Cross-entropy of log_softmax rows against target distributions q [B, 1, K].
Value soft_ce(const Dims& d, std::vector<double> q) {
    const Value target = Value::constant(Shape{d.b, 1, d.k}, std::move(q));
    const Value lsm = ops::log_softmax(d.out, -1);
    return ops::scale(ops::sum(ops::mul(lsm, target)), -1.0 / static_cast<double>(d.b * d.t));
}

}  // namespace

Value loss_rate_mse(const Value& outputs, const std::vector<int>& labels) {
    const Dims d = batched(outputs, labels);
    const Value rate = ops::mean_axis(d.out, 1);  // [B, K]
    std::vector<double> onehot(d.b * d.k, 0.0);
    for (std::size_t i = 0; i < d.b; ++i) onehot[i * d.k + static_cast<std::size_t>(labels[i])] = 1.0;
    return ops::mean(ops::square(ops::sub(rate, Value::constant(Shape{d.b, d.k}, std::move(onehot)))));
}

Value loss_timestep_ce(const Value& outputs, const std::vector<int>& labels) {
    return loss_label_smooth_ce(outputs, labels, 0.0);
}

Value loss_label_smooth_ce(const Value& outputs, const std::vector<int>& labels, double eps) {
    const Dims d = batched(outputs, labels);
    std::vector<double> q(d.b * d.k, eps / static_cast<double>(d.k));
    for (std::size_t i = 0; i < d.b; ++i) q[i * d.k + static_cast<std::size_t>(labels[i])] += 1.0 - eps;
    return soft_ce(d, std::move(q));
}

Value compute_loss(const LossSpec& spec, const Value& outputs, const std::vector<int>& labels) {
    switch (spec.kind) {
        case LossKind::RateMSE: return loss_rate_mse(outputs, labels);
        case LossKind::TimestepCE: return loss_timestep_ce(outputs, labels);
        case LossKind::LabelSmoothCE: return loss_label_smooth_ce(outputs, labels, spec.smoothing);
    }
    throw std::logic_error("unreachable");
}

std::vector<double> rate_readout(const Value& outputs) {
    const Shape& s = outputs.shape();
    const std::size_t b = s.rank() == 3 ? s[0] : 1, t = s[s.rank() - 2], k = s[s.rank() - 1];
    const auto o = outputs.data();
    std::vector<double> r(b * k, 0.0);
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < t; ++j)
            for (std::size_t c = 0; c < k; ++c) r[i * k + c] += o[(i * t + j) * k + c];
    for (double& v : r) v /= static_cast<double>(t);
    return r;
}

std::vector<int> predict(const Value& outputs) {
    const std::size_t k = outputs.shape()[outputs.shape().rank() - 1];
    const auto r = rate_readout(outputs);
    std::vector<int> out(r.size() / k);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < k; ++c) {
            if (r[i * k + c] > r[i * k + best]) best = c;
        }
        out[i] = static_cast<int>(best);
    }
    return out;
}

}  // namespace snn::train
