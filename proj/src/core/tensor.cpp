#include "tensor.hpp"

#include <atomic>
#include <cmath>
#include <unordered_set>

namespace ipa {

namespace {

std::atomic<uint64_t> g_next_node_id{1};
thread_local bool g_grad_enabled = true;

std::shared_ptr<TensorNode> new_node(Shape shape, std::vector<float> values) {
    auto node = std::make_shared<TensorNode>();
    if (numel_of(shape) != static_cast<int64_t>(values.size())) {
        fail(ErrCode::ShapeMismatch,
             "tensor data length " + std::to_string(values.size()) + " does not match shape " +
                 shape_str(shape));
    }
    node->shape = std::move(shape);
    node->values = std::move(values);
    node->id = g_next_node_id.fetch_add(1, std::memory_order_relaxed);
    return node;
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool value) { g_grad_enabled = value; }

Tensor Tensor::zeros(Shape shape) {
    const int64_t n = numel_of(shape);
    return Tensor(new_node(std::move(shape), std::vector<float>(n, 0.0f)));
}

Tensor Tensor::full(Shape shape, float value) {
    const int64_t n = numel_of(shape);
    return Tensor(new_node(std::move(shape), std::vector<float>(n, value)));
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data) {
    return Tensor(new_node(std::move(shape), std::move(data)));
}

Tensor Tensor::scalar(float value) { return from_data({1}, {value}); }

Tensor Tensor::randn(Shape shape, Rng& rng, float stddev) {
    const int64_t n = numel_of(shape);
    std::vector<float> data(n);
    for (int64_t i = 0; i < n; ++i) {
        data[i] = rng.normal_f32() * stddev;
    }
    return Tensor(new_node(std::move(shape), std::move(data)));
}

const Shape& Tensor::shape() const {
    require(defined(), ErrCode::Internal, "use of undefined tensor");
    return node_->shape;
}

int64_t Tensor::numel() const { return static_cast<int64_t>(values().size()); }

int64_t Tensor::dim(int i) const {
    const Shape& s = shape();
    if (i < 0) {
        i += static_cast<int>(s.size());
    }
    return s[i];
}

const std::vector<float>& Tensor::values() const {
    require(defined(), ErrCode::Internal, "use of undefined tensor");
    return node_->values;
}

std::vector<float>& Tensor::values() {
    require(defined(), ErrCode::Internal, "use of undefined tensor");
    return node_->values;
}

bool Tensor::requires_grad() const { return defined() && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
    require(defined(), ErrCode::Internal, "use of undefined tensor");
    node_->requires_grad = value;
    return *this;
}

bool Tensor::has_grad() const { return defined() && !node_->grad.empty(); }

const std::vector<float>& Tensor::grad() const {
    require(has_grad(), ErrCode::MissingGradient, "tensor has no gradient buffer");
    return node_->grad;
}

void Tensor::zero_grad() {
    if (defined()) {
        node_->grad.clear();
    }
}

Tensor Tensor::detach_copy() const { return Tensor(new_node(shape(), values())); }

Tensor make_op_result(Shape shape, std::vector<float> values, std::vector<Tensor> parents,
                      std::function<void(TensorNode&)> backward_fn) {
    auto node = new_node(std::move(shape), std::move(values));
    if (grad_enabled()) {
        bool any = false;
        for (const Tensor& p : parents) {
            if (p.defined() && (p.node()->requires_grad || p.node()->backward_fn)) {
                any = true;
                break;
            }
        }
        if (any) {
            node->parents.reserve(parents.size());
            for (const Tensor& p : parents) {
                node->parents.push_back(p.node());
            }
            node->backward_fn = std::move(backward_fn);
        }
    }
    return Tensor(node);
}

void backward(const Tensor& loss) {
    require(loss.defined(), ErrCode::NotScalar, "backward on undefined tensor");
    require(loss.numel() == 1, ErrCode::NotScalar,
            "backward requires a scalar loss, got shape " + shape_str(loss.shape()));

    // Iterative DFS postorder over the recorded subgraph.
    std::vector<TensorNode*> topo;
    std::unordered_set<TensorNode*> visited;
    struct Frame {
        TensorNode* node;
        size_t next_parent;
    };
    std::vector<Frame> stack;
    TensorNode* root = loss.node().get();
    if (visited.insert(root).second) {
        stack.push_back({root, 0});
    }
    while (!stack.empty()) {
        Frame& frame = stack.back();
        if (frame.next_parent < frame.node->parents.size()) {
            TensorNode* parent = frame.node->parents[frame.next_parent++].get();
            if (parent && visited.insert(parent).second) {
                stack.push_back({parent, 0});
            }
        } else {
            topo.push_back(frame.node);
            stack.pop_back();
        }
    }

    root->accum_grad_alloc();
    root->grad[0] = 1.0f;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        TensorNode* node = *it;
        if (node->backward_fn && !node->grad.empty()) {
            node->backward_fn(*node);
        }
    }
}

void assert_all_finite(const Tensor& t, const char* what) {
    for (float v : t.values()) {
        if (!std::isfinite(v)) {
            fail(ErrCode::Internal, std::string("non-finite value in ") + what);
        }
    }
}

}  // namespace ipa
