#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "snn/tensor/value.hpp"

namespace snn::train {

enum class OptimKind { SGD, Adam, AdamW };
enum class Schedule { Constant, Cosine };

struct OptimSpec {
    OptimKind kind = OptimKind::Adam;
    double lr = 1e-3;
    double momentum = 0.9;      // SGD
    double weight_decay = 0.0;  // coupled (L2) for SGD and Adam, decoupled for AdamW
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    Schedule schedule = Schedule::Constant;

    void validate() const;
    /// Learning rate for a 0-based epoch out of `total` epochs.
    double lr_at(std::size_t epoch, std::size_t total) const;
};

OptimKind parse_optim(const std::string& s);
std::string to_string(OptimKind k);
Schedule parse_schedule(const std::string& s);
std::string to_string(Schedule s);

class Optimizer {
public:
    Optimizer(OptimSpec spec, std::vector<Value> params);

    /// One update from the gradients currently stored on the parameters.
    void step(double lr);
    void zero_grad();

    const OptimSpec& spec() const { return spec_; }
    std::uint64_t steps() const { return t_; }

    void save(const std::filesystem::path& path) const;
    void load(const std::filesystem::path& path);

private:
    OptimSpec spec_;
    std::vector<Value> params_;
    std::vector<std::vector<double>> m_, v_;  // momentum buffer / first moment, second moment
    std::uint64_t t_ = 0;
};

}  // namespace snn::train
