#pragma once

#include <span>
#include <vector>

#include "snn/attention/sma.hpp"

namespace snn::testing {

// Explicit-loop re-implementations of the SMA stages. They read the module's
// parameters but share no code with it. Inputs are flat [B,T,C,H,W].

struct Dims {
    std::size_t b, t, c, h, w;
    std::size_t numel() const { return b * t * c * h * w; }
};

struct OracleEncoded {
    std::vector<double> m;  // [B,N,T,C,H,W]
    std::vector<double> y;  // [B,T,C,H,W]
};

/// Training-mode BN (batch statistics over B, T, H, W) and ReLU.
OracleEncoded oracle_encode(const attention::SmaModule& mod, const std::vector<double>& x, Dims d);
std::vector<double> oracle_t_mse(const attention::SmaModule& mod, const std::vector<double>& y, Dims d);  // [B,N,T]
std::vector<double> oracle_c_mse(const attention::SmaModule& mod, const std::vector<double>& y, Dims d);  // [B,T,N,C]
std::vector<double> oracle_apply(const std::vector<double>& m, const std::vector<double>& wa,
                                 const std::vector<double>& wb, std::size_t n, Dims d);

double max_abs_diff(std::span<const double> a, std::span<const double> b);

}  // namespace snn::testing
