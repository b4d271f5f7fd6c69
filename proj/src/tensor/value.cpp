#include "snn/tensor/value.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

#include "snn/core/error.hpp"

namespace snn {
namespace {

thread_local bool g_grad_enabled = true;
std::atomic<std::uint64_t> g_next_seq{1};

std::shared_ptr<Node> new_node(Shape shape, std::vector<double> data) {
    if (data.size() != shape.numel()) {
        throw ShapeError("data length " + std::to_string(data.size()) +
                         " does not match shape " + shape.str());
    }
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->seq = g_next_seq.fetch_add(1, std::memory_order_relaxed);
    return n;
}

}  // namespace

std::span<double> Node::grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
}

Value Value::constant(Shape shape, std::vector<double> data) {
    return Value(new_node(std::move(shape), std::move(data)));
}

Value Value::constant(Shape shape, double fill) {
    const std::size_t n = shape.numel();
    return Value(new_node(std::move(shape), std::vector<double>(n, fill)));
}

Value Value::parameter(Shape shape, std::vector<double> data) {
    auto n = new_node(std::move(shape), std::move(data));
    n->requires_grad = true;
    n->op = "param";
    return Value(std::move(n));
}

double Value::item() const {
    if (numel() != 1) throw ShapeError("item() on non-scalar value of shape " + shape().str());
    return node_->data[0];
}

std::span<const double> Value::grad() const {
    if (node_->grad.empty()) node_->grad.assign(node_->data.size(), 0.0);
    return node_->grad;
}

void Value::zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void backward(const Value& loss) {
    if (!loss.defined()) throw std::invalid_argument("backward on undefined value");
    if (loss.numel() != 1) {
        throw ShapeError("backward requires a scalar loss, got shape " + loss.shape().str());
    }
    Node& root = loss.node();
    if (root.backward_done) {
        throw std::logic_error("backward called twice on the same graph");
    }
    root.backward_done = true;
    if (!root.requires_grad) return;

    // Collect the interior of the graph, then replay closures in reverse
    // creation order (a valid reverse topological order).
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{&root};
    seen.insert(&root);
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (auto& p : n->parents) {
            if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
        }
    }
    std::sort(order.begin(), order.end(), [](const Node* a, const Node* b) { return a->seq > b->seq; });

    root.grad_buffer()[0] += 1.0;
    for (Node* n : order) {
        if (n->backward && !n->grad.empty()) {
            n->backward(*n);
        }
    }
    // Interior nodes release their closures and saved tensors; leaves keep grads.
    // Parent handles are parked until the sweep ends, since releasing one may
    // destroy a node still listed in `order`.
    std::vector<std::shared_ptr<Node>> parked;
    for (Node* n : order) {
        if (!n->parents.empty()) {
            n->backward = nullptr;
            for (auto& p : n->parents) parked.push_back(std::move(p));
            n->parents.clear();
            n->grad.clear();
            n->grad.shrink_to_fit();
        }
    }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

namespace detail {

Value make_result(Shape shape, std::vector<double> data, std::vector<Value> parents,
                  BackwardFn fn, const char* op) {
    auto n = new_node(std::move(shape), std::move(data));
    n->op = op;
    bool needs = false;
    if (g_grad_enabled) {
        for (const auto& p : parents) needs = needs || p.requires_grad();
    }
    if (needs) {
        n->requires_grad = true;
        n->parents.reserve(parents.size());
        for (auto& p : parents) n->parents.push_back(p.node_ptr());
        n->backward = std::move(fn);
    }
    return Value(std::move(n));
}

}  // namespace detail

}  // namespace snn
