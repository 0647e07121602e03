#pragma once

#include <map>
#include <set>
#include <string>

#include "tensor.hpp"

namespace ipa {

// Named parameter set. Entries are kept in lexicographic name order, which
// fixes iteration, checkpoint record, and optimizer update order. Frozen
// entries never receive gradient buffers and are never touched by the
// optimizer.
class ParamStore {
public:
    Tensor& add(const std::string& name, Tensor t, bool trainable = true);
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool contains(const std::string& name) const;

    void freeze(const std::string& name);
    void freeze_all();
    bool is_frozen(const std::string& name) const;

    std::vector<std::string> names() const;
    std::vector<std::string> trainable_names() const;
    size_t size() const { return entries_.size(); }

    const std::map<std::string, Tensor>& entries() const { return entries_; }

    // Stable byte serialization (names, shapes, raw f32 payloads) used for
    // fingerprints and the freeze ledger.
    std::vector<unsigned char> byte_image() const;

private:
    std::map<std::string, Tensor> entries_;
    std::set<std::string> frozen_;
};

struct OptimState {
    int64_t step_count = 0;
    float lr = 1e-4f;
    float weight_decay = 0.01f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    // First/second moment buffers, present exactly for non-frozen entries.
    std::map<std::string, std::vector<float>> m;
    std::map<std::string, std::vector<float>> v;

    static OptimState create(const ParamStore& params, float lr, float weight_decay);
};

// Decoupled AdamW update over every non-frozen entry; increments step_count
// and clears the consumed gradients. MissingGradient if a trainable entry
// has no populated gradient.
void adamw_step(ParamStore& params, OptimState& state);

// Populates gradients of all trainable parameters reachable from the scalar
// loss. Unreached trainable parameters get zero gradients and are listed in
// the report instead of failing silently.
BackwardReport backward_params(const Tensor& loss, ParamStore& params);

}  // namespace ipa
