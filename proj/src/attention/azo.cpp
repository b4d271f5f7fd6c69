#include "snn/attention/azo.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <ostream>

#include "snn/core/error.hpp"
#include "snn/tensor/ops.hpp"

namespace snn::attention {

std::size_t AzoConfig::delta_t(std::size_t steps) const {
    return static_cast<std::size_t>(std::floor(static_cast<double>(steps) / rtr));
}

std::size_t AzoConfig::delta_c(std::size_t channels) const {
    return static_cast<std::size_t>(std::floor(static_cast<double>(channels) / rcr));
}

void AzoConfig::validate() const {
    if (!(rtr >= 1.0) || !(rcr >= 1.0)) throw ConfigError("azo: rtr and rcr must be >= 1");
}

std::vector<std::size_t> smallest_indices(const std::vector<double>& values, std::size_t k) {
    if (k > values.size()) throw std::invalid_argument("smallest_indices: k exceeds extent");
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

namespace {

struct Dims {
    std::size_t B, N, T, C, HW;
};

struct Batched {
    Value z, wa, wb;
    Dims d;
};

Batched to_batched(const Value& z, const Value& wa, const Value& wb) {
    const Shape& sz = z.shape();
    Batched r{z, wa, wb, {}};
    if (sz.rank() == 4) {
        const Shape& sa = wa.shape();
        const Shape& sb = wb.shape();
        if (sa.rank() < 2 || sb.rank() < 3) {
            throw ShapeError("azo: expected W_alpha [N,T] and W_beta [T,N,C] for rank-4 Z");
        }
        r.z = ops::reshape(z, Shape{1, sz[0], sz[1], sz[2], sz[3]});
        r.wa = ops::reshape(wa, Shape{1, sa[0], sa[1]});
        r.wb = ops::reshape(wb, Shape{1, sb[0], sb[1], sb[2]});
    } else if (sz.rank() != 5) {
        throw ShapeError("azo: Z must be [B,T,C,H,W] or [T,C,H,W], got " + sz.str());
    }
    const Shape& s = r.z.shape();
    const Shape& sa = r.wa.shape();
    const Shape& sb = r.wb.shape();
    r.d = {s[0], sa.rank() == 3 ? sa[1] : 0, s[1], s[2], s[3] * s[4]};
    if (sa.rank() != 3 || sa[0] != r.d.B || sa[2] != r.d.T) {
        throw ShapeError("azo: W_alpha " + sa.str() + " does not match Z " + s.str());
    }
    if (sb != Shape{r.d.B, r.d.T, r.d.N, r.d.C}) throw ShapeError("azo: W_beta " + sb.str() + " does not match Z " + s.str());
    return r;
}

void check_deltas(const Dims& d, const AzoConfig& cfg) {
    cfg.validate();
    if (cfg.delta_t(d.T) > d.T || cfg.delta_c(d.C) > d.C) throw std::invalid_argument("azo: delta exceeds extent");
}

double reduce_scales(const std::vector<double>& v, ScaleReduce r) {
    if (r == ScaleReduce::Max) return *std::max_element(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

/// Source time index for a replaced site, or -1 when the guard skips it.
long source_time(std::size_t i, std::size_t j, std::size_t T, AzoGuard guard) {
    if (guard == AzoGuard::Time) return i == 0 ? -1 : static_cast<long>(i - 1);
    if (j == 0) return -1;
    return static_cast<long>((i + T - 1) % T);
}

AzoReport select_impl(const Value& wa, const Value& wb, std::size_t b, const Dims& d, const AzoConfig& cfg) {
    const auto a = wa.data(), be = wb.data();
    std::vector<double> rank_t(d.T), per(d.N);
    for (std::size_t t = 0; t < d.T; ++t) {
        for (std::size_t n = 0; n < d.N; ++n) per[n] = a[(b * d.N + n) * d.T + t];
        rank_t[t] = reduce_scales(per, cfg.reduce);
    }
    AzoReport rep;
    rep.timesteps = smallest_indices(rank_t, cfg.delta_t(d.T));
    const std::size_t dc = cfg.delta_c(d.C);
    std::vector<double> rank_c(d.C);
    for (std::size_t i : rep.timesteps) {
        for (std::size_t c = 0; c < d.C; ++c) {
            for (std::size_t n = 0; n < d.N; ++n) per[n] = be[((b * d.T + i) * d.N + n) * d.C + c];
            rank_c[c] = reduce_scales(per, cfg.reduce);
        }
        rep.channels.push_back(smallest_indices(rank_c, dc));
        for (std::size_t j : rep.channels.back()) {
            if (source_time(i, j, d.T, cfg.guard) >= 0) ++rep.replaced_sites;
        }
    }
    return rep;
}

}  // namespace

AzoReport select_sites(const Value& w_alpha, const Value& w_beta, std::size_t b, const AzoConfig& config) {
    const Dims d{w_alpha.shape()[0], w_alpha.shape()[1], w_alpha.shape()[2], w_beta.shape()[3], 1};
    check_deltas(d, config);
    return select_impl(w_alpha, w_beta, b, d, config);
}

Value azo_apply(const Value& z, const Value& w_alpha, const Value& w_beta, const AzoConfig& config, bool train,
                std::vector<AzoReport>* reports) {
    if (!train) return z;
    const Batched bt = to_batched(z, w_alpha, w_beta);
    const Dims& d = bt.d;
    check_deltas(d, config);
    // mask[b,t,c] holds the source time index (or -1 for untouched sites).
    std::vector<long> mask(d.B * d.T * d.C, -1);
    for (std::size_t b = 0; b < d.B; ++b) {
        AzoReport rep = select_impl(bt.wa, bt.wb, b, d, config);
        for (std::size_t k = 0; k < rep.timesteps.size(); ++k) {
            const std::size_t i = rep.timesteps[k];
            for (std::size_t j : rep.channels[k]) mask[(b * d.T + i) * d.C + j] = source_time(i, j, d.T, config.guard);
        }
        if (reports) reports->push_back(std::move(rep));
    }
    std::vector<std::size_t> source(z.numel());
    for (std::size_t site = 0; site < mask.size(); ++site) {
        const std::size_t b = site / (d.T * d.C), c = site % d.C;
        const std::size_t t = mask[site] < 0 ? (site / d.C) % d.T : static_cast<std::size_t>(mask[site]);
        const std::size_t from = ((b * d.T + t) * d.C + c) * d.HW;
        for (std::size_t k = 0; k < d.HW; ++k) source[site * d.HW + k] = from + k;
    }
    return ops::gather(z, std::move(source), z.shape());
}

Value azo_reference(const Value& z, const Value& w_alpha, const Value& w_beta, const AzoConfig& config, bool train) {
    std::vector<double> r(z.data().begin(), z.data().end());
    if (!train) return Value::constant(z.shape(), std::move(r));
    NoGradGuard no_grad;
    const Batched bt = to_batched(z, w_alpha, w_beta);
    const Dims& d = bt.d;
    check_deltas(d, config);
    const auto zd = z.data();
    for (std::size_t b = 0; b < d.B; ++b) {
        const AzoReport rep = select_impl(bt.wa, bt.wb, b, d, config);
        for (std::size_t k = 0; k < rep.timesteps.size(); ++k) {
            const std::size_t i = rep.timesteps[k];
            for (std::size_t j : rep.channels[k]) {
                const long src = source_time(i, j, d.T, config.guard);
                if (src < 0) continue;
                for (std::size_t p = 0; p < d.HW; ++p) {
                    r[((b * d.T + i) * d.C + j) * d.HW + p] =
                        zd[((b * d.T + static_cast<std::size_t>(src)) * d.C + j) * d.HW + p];
                }
            }
        }
    }
    return Value::constant(z.shape(), std::move(r));
}

bool azo_vectorized_equivalence(const Value& z, const Value& w_alpha, const Value& w_beta, const AzoConfig& config) {
    const Value a = azo_reference(z, w_alpha, w_beta, config, true);
    const Value b = azo_apply(z, w_alpha, w_beta, config, true);
    return a.numel() == b.numel() && std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)) == 0;
}

void write_azo_header(std::ostream& os) { os << "sample,t,channels\n"; }

void write_azo_rows(std::ostream& os, const AzoReport& report, const std::string& sample) {
    for (std::size_t k = 0; k < report.timesteps.size(); ++k) {
        os << sample << ',' << report.timesteps[k] << ',';
        for (std::size_t i = 0; i < report.channels[k].size(); ++i) os << (i ? ";" : "") << report.channels[k][i];
        os << '\n';
    }
}

}  // namespace snn::attention
