#include "snn/tensor/params.hpp"

#include <cmath>

namespace snn {

std::size_t ParamRefs::count() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.value.numel();
    return n;
}

Value kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::vector<double> data(shape.numel());
    for (double& v : data) v = rng.uniform(-bound, bound);
    return Value::parameter(std::move(shape), std::move(data));
}

}  // namespace snn
