#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "snn/core/shape.hpp"

namespace snn {

struct Node;

/// Backward closure: reads node.grad and accumulates into parents' grads.
using BackwardFn = std::function<void(Node&)>;

/// One record of the computation graph. Nodes are created in evaluation
/// order and link to their parents, so creation order is a valid topological
/// order of the DAG rooted at any result.
struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until a gradient reaches this node
    bool requires_grad = false;
    bool backward_done = false;
    std::uint64_t seq = 0;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    BackwardFn backward;

    std::span<double> grad_buffer();  // allocates zeros on first use
};

/// Dense float64 array with an optional handle into the autograd graph.
/// Copies share the underlying node.
class Value {
public:
    Value() = default;
    explicit Value(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Value constant(Shape shape, std::vector<double> data);
    static Value constant(Shape shape, double fill = 0.0);
    static Value scalar(double v) { return constant(Shape{1}, std::vector<double>{v}); }
    static Value parameter(Shape shape, std::vector<double> data);

    bool defined() const noexcept { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t numel() const { return node_->data.size(); }
    std::span<const double> data() const { return node_->data; }
    /// Writable storage; intended for parameters and freshly built constants.
    std::span<double> mutable_data() { return node_->data; }
    double item() const;
    double at(std::size_t flat) const { return node_->data.at(flat); }

    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    /// Gradient view; zeros (same shape) if nothing has flowed here yet.
    std::span<const double> grad() const;
    void zero_grad();

    const char* op() const { return node_->op; }
    Node& node() const { return *node_; }
    const std::shared_ptr<Node>& node_ptr() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

/// Reverse-mode accumulation from a scalar. Gradients sum over fan-out and
/// add into any existing parameter gradients. Throws for non-scalar losses
/// and for a second call on the same graph.
void backward(const Value& loss);

/// Scoped switch that stops graph recording; ops return plain constants.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

namespace detail {

/// Creates an op result. Parents and the closure are kept only when grad
/// recording is on and some parent requires a gradient.
Value make_result(Shape shape, std::vector<double> data, std::vector<Value> parents,
                  BackwardFn fn, const char* op);

/// Parent accessor usable inside backward closures.
inline Node& parent(Node& n, std::size_t i) { return *n.parents[i]; }

}  // namespace detail

}  // namespace snn
