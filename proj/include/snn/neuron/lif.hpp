#pragma once

#include <string>
#include <variant>

#include "snn/tensor/value.hpp"

namespace snn::neuron {

/// d/dx of (1/pi) * atan(pi * alpha * x / 2) + 1/2.
struct ATan {
    double alpha = 2.0;
};

/// Boxcar derivative: 1 when |x| <= width / 2.
struct RectWindow {
    double width = 1.0;
};

using Surrogate = std::variant<ATan, RectWindow>;

/// Derivative used in place of the Heaviside derivative during backward.
double surrogate_grad(double x, const Surrogate& s);

/// Smooth step whose derivative is surrogate_grad.
double surrogate_primitive(double x, const Surrogate& s);

std::string describe(const Surrogate& s);

struct NeuronConfig {
    double tau = 2.0;
    double u_threshold = 1.0;
    double u_reset = 0.0;
    Surrogate surrogate = ATan{};
    /// Treat the (1 - S) reset gate as a constant during backward.
    bool detach_reset = true;
    /// Replace the step with surrogate_primitive in the forward pass too. The
    /// network is then smooth end to end, which is what finite-difference
    /// checks of the BPTT wiring need. Off for training.
    bool smooth_forward = false;

    /// Throws ConfigError unless tau > 0 and u_threshold > u_reset.
    void validate() const;
};

/// Hidden membrane state H of one layer for one in-flight sequence.
struct NeuronState {
    Value hidden;

    /// Fresh state for the start of a sequence: every site at u_reset.
    static NeuronState reset(const Shape& shape, const NeuronConfig& config);
};

/// Heaviside step S = (x >= 0) with the surrogate derivative on backward.
/// With `smooth` the forward emits surrogate_primitive(x) instead.
Value spike(const Value& x, const Surrogate& surrogate, bool smooth = false);

struct StepResult {
    Value spikes;
    NeuronState state;
    Value membrane;
};

/// One explicit LIF iteration:
///   U = H + (I - (H - U_reset)) / tau
///   S = step(U - U_threshold)
///   H' = U * (1 - S)
StepResult lif_step(const Value& input, const NeuronState& state, const NeuronConfig& config);

/// Applies lif_step along `time_axis` by composing graph ops; gradients flow
/// across timesteps through H.
Value run_sequence(const Value& inputs, const NeuronConfig& config, int time_axis = 0);

/// Same dynamics as run_sequence as a single graph node with a hand-written
/// BPTT backward. Used by the network layers.
Value lif_sequence(const Value& inputs, const NeuronConfig& config, int time_axis = 0);

}  // namespace snn::neuron
