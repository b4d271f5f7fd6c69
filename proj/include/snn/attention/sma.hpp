#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "snn/core/rng.hpp"
#include "snn/neuron/lif.hpp"
#include "snn/tensor/ops.hpp"
#include "snn/tensor/params.hpp"

namespace snn::attention {

enum class EncoderActivation { ReLU, LIF };

struct SmaConfig {
    std::vector<int> kernels{1, 3, 5, 7};  // one odd size per scale
    int cr = 4;                            // channel reduction
    int tr = 4;                            // time reduction
    EncoderActivation activation = EncoderActivation::ReLU;
    neuron::NeuronConfig neuron;

    std::size_t scales() const { return kernels.size(); }
    /// Throws ConfigError on fewer than 2 scales, even or non-increasing
    /// kernel sizes, or non-positive ratios.
    void validate() const;
    /// Throws ConfigError unless T % tr == 0 and C % cr == 0.
    void check_fit(std::size_t steps, std::size_t channels) const;
};

/// Kernel sizes 1, 3, 5, ... for n scales.
std::vector<int> default_kernels(std::size_t n);

struct Encoded {
    Value m;  // [B, N, T, C, H, W]
    Value y;  // [B, T, C, H, W], mean of m over scales
};

struct SmaOutput {
    Value z;        // [B, T, C, H, W]
    Value w_alpha;  // [B, N, T]
    Value w_beta;   // [B, T, N, C]
};

/// Multiscale encoder plus the temporal (T-MSE) and channel (C-MSE)
/// multiscale squeeze-excitation decoders. Shapes are fixed at construction
/// by (T, C). Inputs are [B, T, C, H, W]; a rank-4 [T, C, H, W] input is
/// treated as a batch of one.
class SmaModule {
public:
    SmaModule(std::size_t steps, std::size_t channels, SmaConfig config, Rng& rng);

    const SmaConfig& config() const { return config_; }
    std::size_t steps() const { return steps_; }
    std::size_t channels() const { return channels_; }
    std::size_t scales() const { return config_.scales(); }
    std::size_t time_hidden() const { return steps_ / static_cast<std::size_t>(config_.tr); }
    std::size_t channel_hidden() const { return channels_ / static_cast<std::size_t>(config_.cr); }

    Encoded encode(const Value& x, bool train);
    Value t_mse(const Value& y) const;
    Value c_mse(const Value& y) const;
    SmaOutput forward(const Value& x, bool train);

    void collect(const std::string& prefix, ParamRefs& refs);

    std::size_t encoder_param_count() const;
    std::size_t t_mse_param_count() const;
    std::size_t c_mse_param_count() const;
    std::size_t decoder_param_count() const { return t_mse_param_count() + c_mse_param_count(); }
    std::size_t param_count() const { return encoder_param_count() + decoder_param_count(); }

    // Parameters, exposed for tests and analysis.
    std::vector<Value> enc_kernel, bn_gamma, bn_beta;
    std::vector<ops::BatchNormStats> bn_stats;
    Value t_squeeze_w, t_squeeze_b;
    std::vector<Value> t_excite_w, t_excite_b;
    Value c_squeeze_w, c_squeeze_b;
    std::vector<Value> c_excite_w, c_excite_b;

private:
    Value batched(const Value& x) const;

    SmaConfig config_;
    std::size_t steps_, channels_;
};

/// Z[b,t,c,h,w] = sum_n M[b,n,t,c,h,w] * W_alpha[b,n,t] * W_beta[b,t,n,c].
Value sma_apply(const Value& m, const Value& w_alpha, const Value& w_beta);

/// Closed-form decoder sizes: weight terms T*T/TR*(N+1) and C*C/CR*(N+1),
/// plus biases T/TR + N*T and C/CR + N*C.
std::size_t t_mse_weight_count(std::size_t t, std::size_t tr, std::size_t n);
std::size_t c_mse_weight_count(std::size_t c, std::size_t cr, std::size_t n);
std::size_t decoder_param_formula(std::size_t t, std::size_t c, std::size_t tr, std::size_t cr, std::size_t n);

/// Per-scale importance of sample b: mean over (t, c) of
/// W_alpha[b,n,t] * W_beta[b,t,n,c], normalized to sum to 1 over n.
std::vector<double> scale_importance(const Value& w_alpha, const Value& w_beta, std::size_t b);

/// Long-format trace rows: "sample,t,n,w_alpha" and "sample,t,n,c,w_beta".
/// Headers are written by the *_header functions.
void write_alpha_header(std::ostream& os);
void write_beta_header(std::ostream& os);
void write_alpha_rows(std::ostream& os, const Value& w_alpha, std::size_t b, const std::string& sample);
void write_beta_rows(std::ostream& os, const Value& w_beta, std::size_t b, const std::string& sample);

}  // namespace snn::attention
