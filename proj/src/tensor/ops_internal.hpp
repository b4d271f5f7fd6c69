#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "snn/core/error.hpp"
#include "snn/kernels/kernels.hpp"
#include "snn/tensor/value.hpp"

namespace snn::ops::detail {

using snn::detail::make_result;
using snn::detail::parent;

/// Gradient buffer of a parent, or empty if the parent needs none.
inline std::span<double> grad_of(Node& n) {
    if (!n.requires_grad) return {};
    return n.grad_buffer();
}

inline const kernels::KernelTable& kt() { return kernels::active(); }

/// Row-major strides of a shape, with stride 0 on axes whose operand extent is 1
/// while the output extent is larger (broadcast axes). `dims` is right-aligned
/// against `out`.
std::vector<std::size_t> broadcast_strides(const std::vector<std::size_t>& dims,
                                           const std::vector<std::size_t>& out);

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op);

/// Calls fn(out_index, a_offset, b_offset) for every output element in order.
void for_each_broadcast(const std::vector<std::size_t>& out, const std::vector<std::size_t>& sa,
                        const std::vector<std::size_t>& sb,
                        const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

/// Runs fn(i) for i in [0, n) on up to SNN_THREADS workers. Each index is
/// handled by exactly one worker, so per-index results are deterministic.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace snn::ops::detail
