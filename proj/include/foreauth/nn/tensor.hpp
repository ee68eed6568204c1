#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "foreauth/common/error.hpp"

namespace foreauth::nn {

/// Dense tensor shape, rank 1..3.
using Shape = std::vector<int>;

inline int shape_size(const Shape& s) {
    int n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ")";
    return os.str();
}

inline void check_shape_valid(const Shape& s) {
    if (s.empty() || s.size() > 3) throw ShapeError("tensor rank must be 1..3, got rank " + std::to_string(s.size()));
    for (int d : s)
        if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(s));
}

template <typename S>
struct TensorNode {
    Shape shape;
    std::vector<S> values;
    std::vector<S> grad; // same size as values when requires_grad, else empty
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn; // propagates this->grad into parents
};

/// Dense real tensor (rank <= 3) with reverse-mode gradient accumulation.
///
/// Value-like handle over a shared node: copies alias the same storage, so a
/// tensor is cheap to pass around. Ops build a graph of parent links;
/// backward() on a scalar result accumulates grads into every requires_grad
/// leaf reachable from it. clone() makes a detached deep copy.
template <typename S>
class TensorT {
public:
    using Node = TensorNode<S>;

    TensorT() = default;
    explicit TensorT(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static TensorT zeros(Shape shape, bool requires_grad = false) {
        check_shape_valid(shape);
        auto n = std::make_shared<Node>();
        n->values.assign(static_cast<std::size_t>(shape_size(shape)), S(0));
        n->shape = std::move(shape);
        n->requires_grad = requires_grad;
        if (requires_grad) n->grad.assign(n->values.size(), S(0));
        return TensorT(std::move(n));
    }

    static TensorT full(Shape shape, S value) {
        TensorT t = zeros(std::move(shape));
        for (S& v : t.values()) v = value;
        return t;
    }

    /// Builds a tensor from explicit values. Rejects non-finite entries:
    /// NaN/Inf is an error state, never silently ingested.
    static TensorT from_values(Shape shape, std::vector<S> values, bool requires_grad = false) {
        check_shape_valid(shape);
        if (static_cast<int>(values.size()) != shape_size(shape))
            throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " + shape_str(shape));
        for (S v : values)
            if (!std::isfinite(static_cast<double>(v))) throw NumericError("non-finite value in tensor input");
        auto n = std::make_shared<Node>();
        n->shape = std::move(shape);
        n->values = std::move(values);
        n->requires_grad = requires_grad;
        if (requires_grad) n->grad.assign(n->values.size(), S(0));
        return TensorT(std::move(n));
    }

    static TensorT scalar(S value, bool requires_grad = false) {
        return from_values({1}, {value}, requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    int size() const { return static_cast<int>(node_->values.size()); }
    int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }

    std::vector<S>& values() { return node_->values; }
    const std::vector<S>& values() const { return node_->values; }

    S& at(int i) { return node_->values[static_cast<std::size_t>(i)]; }
    S at(int i) const { return node_->values[static_cast<std::size_t>(i)]; }
    S& at(int i, int j) { return node_->values[static_cast<std::size_t>(i) * dim(1) + j]; }
    S at(int i, int j) const { return node_->values[static_cast<std::size_t>(i) * dim(1) + j]; }
    S& at(int i, int j, int k) {
        return node_->values[(static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k];
    }
    S at(int i, int j, int k) const {
        return node_->values[(static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k];
    }

    bool requires_grad() const { return node_->requires_grad; }

    TensorT& set_requires_grad(bool on) {
        node_->requires_grad = on;
        if (on)
            node_->grad.assign(node_->values.size(), S(0));
        else
            node_->grad.clear();
        return *this;
    }

    const std::vector<S>& grad() const {
        if (!node_->requires_grad) throw ConfigError("grad requested on tensor without requires_grad");
        return node_->grad;
    }
    std::vector<S>& grad_mut() {
        if (!node_->requires_grad) throw ConfigError("grad requested on tensor without requires_grad");
        return node_->grad;
    }

    void zero_grad() {
        if (node_->requires_grad) node_->grad.assign(node_->values.size(), S(0));
    }

    /// Reverse-mode pass from a scalar result. Seeds d(this)/d(this) = 1 and
    /// runs the recorded graph in reverse topological order.
    void backward() {
        if (size() != 1) throw ShapeError("backward() requires a scalar tensor, got " + shape_str(shape()));
        if (!node_->requires_grad) throw ConfigError("backward() on a tensor that does not require grad");

        std::vector<Node*> order;
        std::unordered_set<Node*> seen;
        topo_sort(node_.get(), seen, order);

        node_->grad.assign(1, S(1));
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node* n = *it;
            if (n->backward_fn) n->backward_fn(*n);
        }
    }

    /// Detached deep copy (fresh storage, no graph history).
    TensorT clone() const {
        auto n = std::make_shared<Node>();
        n->shape = node_->shape;
        n->values = node_->values;
        n->requires_grad = node_->requires_grad;
        if (n->requires_grad) n->grad.assign(n->values.size(), S(0));
        return TensorT(std::move(n));
    }

    /// Same values, cut off from the graph, never requires grad.
    TensorT detach() const {
        auto n = std::make_shared<Node>();
        n->shape = node_->shape;
        n->values = node_->values;
        return TensorT(std::move(n));
    }

    bool all_finite() const {
        for (S v : node_->values)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    std::shared_ptr<Node> node_ptr() const { return node_; }
    Node* node() const { return node_.get(); }

private:
    static void topo_sort(Node* n, std::unordered_set<Node*>& seen, std::vector<Node*>& order) {
        // Iterative DFS; graphs from long training sequences would overflow a
        // recursive version.
        struct Frame {
            Node* node;
            std::size_t next_parent;
        };
        std::vector<Frame> stack;
        if (seen.insert(n).second) stack.push_back({n, 0});
        while (!stack.empty()) {
            Frame& f = stack.back();
            if (f.next_parent < f.node->parents.size()) {
                Node* p = f.node->parents[f.next_parent++].get();
                if (seen.insert(p).second) stack.push_back({p, 0});
            } else {
                order.push_back(f.node);
                stack.pop_back();
            }
        }
    }

    std::shared_ptr<Node> node_;
};

/// Pipeline precision: training and inference run at 32-bit.
using Tensor = TensorT<float>;
/// Gradient checks and closed-form oracles run at 64-bit.
using Tensor64 = TensorT<double>;

} // namespace foreauth::nn
