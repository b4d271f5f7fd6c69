#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "snn/tensor/value.hpp"

namespace snn::attention {

enum class ScaleReduce { Mean, Max };

/// Which sites are skipped. Time: no replacement at t = 0.
/// Channel: skip channel 0 and read t - 1 cyclically (t = 0 reads T - 1).
enum class AzoGuard { Time, Channel };

struct AzoConfig {
    double rtr = 4.0;  // replacement-time ratio
    double rcr = 4.0;  // replacement-channel ratio
    ScaleReduce reduce = ScaleReduce::Mean;
    AzoGuard guard = AzoGuard::Time;

    std::size_t delta_t(std::size_t steps) const;
    std::size_t delta_c(std::size_t channels) const;
    /// Throws ConfigError unless both ratios are >= 1.
    void validate() const;
};

struct AzoReport {
    std::vector<std::size_t> timesteps;              // H, ascending
    std::vector<std::vector<std::size_t>> channels;  // P_i per entry of H, ascending
    std::size_t replaced_sites = 0;
};

/// Indices of the k smallest entries, ties to the lower index, returned ascending.
std::vector<std::size_t> smallest_indices(const std::vector<double>& values, std::size_t k);

/// Site selection for sample b. W_alpha [B,N,T], W_beta [B,T,N,C].
AzoReport select_sites(const Value& w_alpha, const Value& w_beta, std::size_t b, const AzoConfig& config);

/// Vectorized path: one mask over (b, t, c) and a single gather. Replaced
/// sites read the original Z at t - 1; gradients flow to the source site.
/// Z is [B,T,C,H,W] (or [T,C,H,W] with W_alpha [N,T] and W_beta [T,N,C]).
/// In eval mode the input is returned unchanged and no reports are written.
Value azo_apply(const Value& z, const Value& w_alpha, const Value& w_beta, const AzoConfig& config, bool train,
                std::vector<AzoReport>* reports = nullptr);

/// Explicit-loop reference: copy Z, then overwrite sites one by one from the
/// original Z. Returns a constant.
Value azo_reference(const Value& z, const Value& w_alpha, const Value& w_beta, const AzoConfig& config, bool train);

/// Runs both paths and compares bit for bit.
bool azo_vectorized_equivalence(const Value& z, const Value& w_alpha, const Value& w_beta, const AzoConfig& config);

void write_azo_header(std::ostream& os);
/// One row per selected timestep: sample, t, channels separated by ';'.
void write_azo_rows(std::ostream& os, const AzoReport& report, const std::string& sample);

}  // namespace snn::attention
