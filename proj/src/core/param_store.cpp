#include "param_store.hpp"

#include <cmath>
#include <cstring>

namespace ipa {

namespace {

void validate_name(const std::string& name) {
    require(!name.empty(), ErrCode::BadArg, "parameter name must be non-empty");
    require(name.front() != '/' && name.back() != '/', ErrCode::BadArg,
            "parameter name must not start or end with '/': " + name);
    require(name.find("//") == std::string::npos, ErrCode::BadArg,
            "parameter name must use non-empty '/' segments: " + name);
}

}  // namespace

Tensor& ParamStore::add(const std::string& name, Tensor t, bool trainable) {
    validate_name(name);
    require(!contains(name), ErrCode::BadArg, "duplicate parameter name: " + name);
    t.set_requires_grad(trainable);
    if (!trainable) {
        frozen_.insert(name);
    }
    return entries_.emplace(name, std::move(t)).first->second;
}

Tensor& ParamStore::at(const std::string& name) {
    auto it = entries_.find(name);
    require(it != entries_.end(), ErrCode::BadArg, "unknown parameter: " + name);
    return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
    auto it = entries_.find(name);
    require(it != entries_.end(), ErrCode::BadArg, "unknown parameter: " + name);
    return it->second;
}

bool ParamStore::contains(const std::string& name) const { return entries_.count(name) != 0; }

void ParamStore::freeze(const std::string& name) {
    at(name).set_requires_grad(false).zero_grad();
    frozen_.insert(name);
}

void ParamStore::freeze_all() {
    for (auto& [name, tensor] : entries_) {
        tensor.set_requires_grad(false);
        tensor.zero_grad();
        frozen_.insert(name);
    }
}

bool ParamStore::is_frozen(const std::string& name) const { return frozen_.count(name) != 0; }

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [name, tensor] : entries_) {
        out.push_back(name);
    }
    return out;
}

std::vector<std::string> ParamStore::trainable_names() const {
    std::vector<std::string> out;
    for (const auto& [name, tensor] : entries_) {
        if (!is_frozen(name)) {
            out.push_back(name);
        }
    }
    return out;
}

std::vector<unsigned char> ParamStore::byte_image() const {
    std::vector<unsigned char> out;
    for (const auto& [name, tensor] : entries_) {
        out.insert(out.end(), name.begin(), name.end());
        out.push_back(0);
        for (int64_t d : tensor.shape()) {
            for (int i = 0; i < 8; ++i) {
                out.push_back(static_cast<unsigned char>((static_cast<uint64_t>(d) >> (8 * i)) &
                                                         0xff));
            }
        }
        const size_t pos = out.size();
        out.resize(pos + tensor.numel() * sizeof(float));
        std::memcpy(out.data() + pos, tensor.data(), tensor.numel() * sizeof(float));
    }
    return out;
}

OptimState OptimState::create(const ParamStore& params, float lr, float weight_decay) {
    OptimState state;
    state.lr = lr;
    state.weight_decay = weight_decay;
    for (const std::string& name : params.trainable_names()) {
        const int64_t n = params.at(name).numel();
        state.m.emplace(name, std::vector<float>(n, 0.0f));
        state.v.emplace(name, std::vector<float>(n, 0.0f));
    }
    return state;
}

void adamw_step(ParamStore& params, OptimState& state) {
    state.step_count += 1;
    const double bc1 = 1.0 - std::pow(static_cast<double>(state.beta1), state.step_count);
    const double bc2 = 1.0 - std::pow(static_cast<double>(state.beta2), state.step_count);
    for (const std::string& name : params.trainable_names()) {
        Tensor& p = params.at(name);
        require(p.has_grad(), ErrCode::MissingGradient,
                "no gradient for trainable parameter " + name);
        auto mit = state.m.find(name);
        auto vit = state.v.find(name);
        require(mit != state.m.end() && vit != state.v.end(), ErrCode::Internal,
                "optimizer state missing for " + name);
        float* pv = p.data();
        const std::vector<float>& g = p.grad();
        std::vector<float>& m = mit->second;
        std::vector<float>& v = vit->second;
        const float lr = state.lr;
        const float wd = state.weight_decay;
        const float b1 = state.beta1;
        const float b2 = state.beta2;
        const float inv_bc1 = static_cast<float>(1.0 / bc1);
        const float inv_bc2 = static_cast<float>(1.0 / bc2);
        const int64_t n = p.numel();
        for (int64_t i = 0; i < n; ++i) {
            m[i] = b1 * m[i] + (1.0f - b1) * g[i];
            v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
            const float mhat = m[i] * inv_bc1;
            const float vhat = v[i] * inv_bc2;
            pv[i] -= lr * wd * pv[i];
            pv[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
        p.zero_grad();
#ifndef NDEBUG
        assert_all_finite(p, name.c_str());
#endif
    }
}

BackwardReport backward_params(const Tensor& loss, ParamStore& params) {
    backward(loss);
    BackwardReport report;
    for (const std::string& name : params.trainable_names()) {
        Tensor& p = params.at(name);
        if (!p.has_grad()) {
            p.node()->accum_grad_alloc();
            report.disconnected.push_back(name);
        }
    }
    return report;
}

}  // namespace ipa
