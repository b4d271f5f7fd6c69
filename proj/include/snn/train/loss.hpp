#pragma once

#include <string>
#include <vector>

#include "snn/tensor/value.hpp"

namespace snn::train {

enum class LossKind { RateMSE, TimestepCE, LabelSmoothCE };

struct LossSpec {
    LossKind kind = LossKind::TimestepCE;
    double smoothing = 0.1;  // LabelSmoothCE only

    void validate() const;
};

LossKind parse_loss(const std::string& s);
std::string to_string(LossKind k);

// All losses take per-timestep outputs [B, T, K] (or [T, K] for one sample)
// and return the mean over the batch.

/// Mean squared error between the rate r = mean_t(out) and one-hot(label),
/// averaged over classes.
Value loss_rate_mse(const Value& outputs, const std::vector<int>& labels);

/// (1/T) sum_t cross-entropy(softmax(out_t), label).
Value loss_timestep_ce(const Value& outputs, const std::vector<int>& labels);

/// Per-timestep cross-entropy against (1 - eps) * one-hot + eps / K.
Value loss_label_smooth_ce(const Value& outputs, const std::vector<int>& labels, double eps);

Value compute_loss(const LossSpec& spec, const Value& outputs, const std::vector<int>& labels);

/// Class scores used for prediction: mean of outputs over T, [B, K].
std::vector<double> rate_readout(const Value& outputs);
std::vector<int> predict(const Value& outputs);

}  // namespace snn::train
