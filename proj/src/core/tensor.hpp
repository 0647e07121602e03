#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "common.hpp"
#include "rng.hpp"

namespace ipa {

struct TensorNode;

// Cheap shared handle onto a node of the forward tape. Ops record a backward
// closure on the result node whenever gradients are enabled and any input
// participates in differentiation.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, float value);
    static Tensor from_data(Shape shape, std::vector<float> data);
    static Tensor scalar(float value);
    static Tensor randn(Shape shape, Rng& rng, float stddev = 1.0f);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    int64_t numel() const;
    int64_t dim(int i) const;

    const std::vector<float>& values() const;
    std::vector<float>& values();
    const float* data() const { return values().data(); }
    float* data() { return values().data(); }

    bool requires_grad() const;
    Tensor& set_requires_grad(bool value);

    bool has_grad() const;
    const std::vector<float>& grad() const;
    void zero_grad();

    // Detached copy of the values, no tape edge.
    Tensor detach_copy() const;

    std::shared_ptr<TensorNode> node() const { return node_; }
    explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<TensorNode> node_;
};

struct TensorNode {
    Shape shape;
    std::vector<float> values;
    std::vector<float> grad;  // allocated on first accumulation
    bool requires_grad = false;
    uint64_t id = 0;

    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn;

    void accum_grad_alloc() {
        if (grad.empty()) {
            grad.assign(values.size(), 0.0f);
        }
    }
};

// Thread-local gradient recording switch (on by default).
bool grad_enabled();
void set_grad_enabled(bool value);

struct NoGradGuard {
    NoGradGuard() : prev_(grad_enabled()) { set_grad_enabled(false); }
    ~NoGradGuard() { set_grad_enabled(prev_); }

private:
    bool prev_;
};

// Creates a result node, wiring parents and the backward closure only when
// recording is active and some parent is part of the differentiable graph.
Tensor make_op_result(Shape shape, std::vector<float> values, std::vector<Tensor> parents,
                      std::function<void(TensorNode&)> backward_fn);

struct BackwardReport {
    // Parameters that required gradients but were not reached from the loss.
    std::vector<std::string> disconnected;
};

// Seeds d(loss)/d(loss) = 1 and runs the recorded closures in reverse
// topological order. Accumulation follows node creation order, so repeated
// runs are bitwise identical.
void backward(const Tensor& loss);

void assert_all_finite(const Tensor& t, const char* what);

}  // namespace ipa
