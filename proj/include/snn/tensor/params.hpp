#pragma once

#include <string>
#include <vector>

#include "snn/core/rng.hpp"
#include "snn/tensor/value.hpp"

namespace snn {

struct NamedParam {
    std::string name;
    Value value;
};

/// Non-trainable state that still has to be saved (BN running statistics).
struct NamedBuffer {
    std::string name;
    std::vector<double>* data;
};

struct ParamRefs {
    std::vector<NamedParam> params;
    std::vector<NamedBuffer> buffers;

    void add(std::string name, Value v) { params.push_back({std::move(name), std::move(v)}); }
    void add_buffer(std::string name, std::vector<double>& d) { buffers.push_back({std::move(name), &d}); }
    std::size_t count() const;
};

/// U(-b, b) with b = sqrt(6 / fan_in).
Value kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng);

}  // namespace snn
