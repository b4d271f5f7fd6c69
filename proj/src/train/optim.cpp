#include "snn/train/optim.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "snn/core/error.hpp"

namespace snn::train {

void OptimSpec::validate() const {
    if (!(lr > 0.0)) throw ConfigError("optim: lr must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("optim: momentum must lie in [0, 1)");
    if (weight_decay < 0.0) throw ConfigError("optim: weight_decay must be >= 0");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) throw ConfigError("optim: betas must lie in [0, 1)");
    if (!(eps > 0.0)) throw ConfigError("optim: eps must be > 0");
}

double OptimSpec::lr_at(std::size_t epoch, std::size_t total) const {
    if (schedule == Schedule::Constant || total == 0) return lr;
    return 0.5 * lr * (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(total)));
}

OptimKind parse_optim(const std::string& s) {
    if (s == "sgd") return OptimKind::SGD;
    if (s == "adam") return OptimKind::Adam;
    if (s == "adamw") return OptimKind::AdamW;
    throw ConfigError("unknown optimizer '" + s + "' (expected sgd, adam or adamw)");
}

std::string to_string(OptimKind k) { return k == OptimKind::SGD ? "sgd" : k == OptimKind::Adam ? "adam" : "adamw"; }

Schedule parse_schedule(const std::string& s) {
    if (s == "constant") return Schedule::Constant;
    if (s == "cosine") return Schedule::Cosine;
    throw ConfigError("unknown schedule '" + s + "' (expected constant or cosine)");
}

std::string to_string(Schedule s) { return s == Schedule::Constant ? "constant" : "cosine"; }

Optimizer::Optimizer(OptimSpec spec, std::vector<Value> params) : spec_(spec), params_(std::move(params)) {
    spec_.validate();
    for (const auto& p : params_) {
        m_.emplace_back(p.numel(), 0.0);
        v_.emplace_back(spec_.kind == OptimKind::SGD ? 0 : p.numel(), 0.0);
    }
}

void Optimizer::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

void Optimizer::step(double lr) {
    ++t_;
    const double wd = spec_.weight_decay;
    const double bc1 = 1.0 - std::pow(spec_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(spec_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Value& p = params_[k];
        if (!p.has_grad()) continue;
        auto w = p.mutable_data();
        const auto g = p.grad();
        auto& m = m_[k];
        switch (spec_.kind) {
            case OptimKind::SGD:
                for (std::size_t i = 0; i < w.size(); ++i) {
                    const double gi = g[i] + wd * w[i];
                    m[i] = t_ == 1 ? gi : spec_.momentum * m[i] + gi;
                    w[i] -= lr * m[i];
                }
                break;
            case OptimKind::Adam:
            case OptimKind::AdamW: {
                auto& v = v_[k];
                const bool decoupled = spec_.kind == OptimKind::AdamW;
                for (std::size_t i = 0; i < w.size(); ++i) {
                    double gi = g[i];
                    if (decoupled) {
                        w[i] -= lr * wd * w[i];
                    } else {
                        gi += wd * w[i];
                    }
                    m[i] = spec_.beta1 * m[i] + (1.0 - spec_.beta1) * gi;
                    v[i] = spec_.beta2 * v[i] + (1.0 - spec_.beta2) * gi * gi;
                    const double mh = m[i] / bc1;
                    const double vh = v[i] / bc2;
                    w[i] -= lr * mh / (std::sqrt(vh) + spec_.eps);
                }
                break;
            }
        }
    }
}

void Optimizer::save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    const auto put = [&](const void* p, std::size_t n) { os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); };
    os.write("SNNO", 4);
    const auto kind = static_cast<std::uint32_t>(spec_.kind);
    const auto n = static_cast<std::uint64_t>(params_.size());
    put(&kind, 4);
    put(&t_, 8);
    put(&n, 8);
    for (std::size_t k = 0; k < params_.size(); ++k) {
        const std::uint64_t a = m_[k].size(), b = v_[k].size();
        put(&a, 8);
        put(m_[k].data(), a * 8);
        put(&b, 8);
        put(v_[k].data(), b * 8);
    }
    if (!os) throw IoError("write failed for " + path.string());
}

void Optimizer::load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open optimizer state " + path.string());
    const auto get = [&](void* p, std::size_t n, const char* what) {
        const auto at = static_cast<long long>(is.tellg());
        if (!is.read(static_cast<char*>(p), static_cast<std::streamsize>(n))) {
            throw IoError(path.string() + ": truncated at byte offset " + std::to_string(at) + " reading " + what);
        }
    };
    char magic[4];
    get(magic, 4, "magic");
    if (std::string(magic, 4) != "SNNO") throw IoError(path.string() + ": not an optimizer state file");
    std::uint32_t kind = 0;
    std::uint64_t t = 0, n = 0;
    get(&kind, 4, "kind");
    get(&t, 8, "step count");
    get(&n, 8, "slot count");
    if (kind != static_cast<std::uint32_t>(spec_.kind) || n != params_.size()) {
        throw IoError(path.string() + ": optimizer state does not match the configured optimizer");
    }
    auto m = m_, v = v_;
    for (std::size_t k = 0; k < n; ++k) {
        std::uint64_t a = 0, b = 0;
        get(&a, 8, "slot size");
        if (a != m[k].size()) throw IoError(path.string() + ": slot " + std::to_string(k) + " size mismatch");
        get(m[k].data(), a * 8, "slot data");
        get(&b, 8, "slot size");
        if (b != v[k].size()) throw IoError(path.string() + ": slot " + std::to_string(k) + " size mismatch");
        get(v[k].data(), b * 8, "slot data");
    }
    m_ = std::move(m);
    v_ = std::move(v);
    t_ = t;
}

}  // namespace snn::train
