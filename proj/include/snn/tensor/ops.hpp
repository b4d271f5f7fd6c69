#pragma once

#include <optional>
#include <vector>

#include "snn/core/rng.hpp"
#include "snn/tensor/value.hpp"

namespace snn::ops {

// ---- elementwise -----------------------------------------------------------
// Binary ops broadcast numpy-style: ranks are right-aligned and an extent of 1
// stretches to match the other operand.

Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);
Value neg(const Value& a);
Value scale(const Value& a, double s);
Value add_scalar(const Value& a, double s);
Value relu(const Value& a);
Value square(const Value& a);
Value exp(const Value& a);
Value log(const Value& a);
/// Same data with gradient flow cut.
Value detach(const Value& a);

// ---- reductions ------------------------------------------------------------

Value sum(const Value& a);
Value mean(const Value& a);
Value sum_axis(const Value& a, int axis, bool keepdim = false);
Value mean_axis(const Value& a, int axis, bool keepdim = false);

// ---- layout ----------------------------------------------------------------

Value reshape(const Value& a, Shape shape);
Value permute(const Value& a, const std::vector<std::size_t>& order);
/// Joins equal-shaped values along a new axis.
Value stack(const std::vector<Value>& parts, int axis);
/// Slice `index` along `axis`, removing the axis.
Value select(const Value& a, int axis, std::size_t index);
/// out[i] = a[source[i]]; the result takes `shape`. Gradients scatter-add back.
Value gather(const Value& a, std::vector<std::size_t> source, Shape shape);

// ---- neural network primitives --------------------------------------------

inline int same_padding(int kernel) { return (kernel - 1) / 2; }

/// Cross-correlation over the trailing C x H x W axes; leading axes are batch.
/// kernel: [C_out, C_in, k, k]; bias: [C_out] or undefined.
Value conv2d(const Value& input, const Value& kernel, const Value& bias, int stride, int padding);

struct BatchNormStats {
    std::vector<double> running_mean;
    std::vector<double> running_var;  // population (biased) variance
    explicit BatchNormStats(std::size_t channels = 0)
        : running_mean(channels, 0.0), running_var(channels, 1.0) {}
};

struct BatchNormOptions {
    bool train = true;
    double epsilon = 1e-5;
    double momentum = 0.9;  // running = momentum * running + (1 - momentum) * batch
    int channel_axis = -3;
};

/// Per-channel normalization pooled over every other axis.
Value batch_norm(const Value& input, const Value& gamma, const Value& beta, BatchNormStats& stats,
                 const BatchNormOptions& opts);

/// Window max over the trailing H x W axes; padded cells never win. Ties go
/// to the lowest flat index within the window.
Value max_pool2d(const Value& input, int window, int stride, int padding);

/// Mean over the trailing H x W axes, keeping them as 1 x 1.
Value avg_pool_global(const Value& input);

/// Non-overlapping mean over window x window tiles; H and W must divide evenly.
Value avg_pool2d(const Value& input, int window);

Value softmax(const Value& input, int axis);
Value log_softmax(const Value& input, int axis);

/// Fully connected over the last axis: [..., in] x W[out, in]^T + b[out].
Value affine(const Value& input, const Value& weight, const Value& bias);

/// Inverted dropout; identity when !train or p == 0.
Value dropout(const Value& input, double p, Rng& rng, bool train);

}  // namespace snn::ops
