#pragma once

#include <memory>

#include "control.hpp"
#include "unet.hpp"

namespace ipa {

enum class AdapterVariant { global, finegrained, simple };

const char* adapter_variant_name(AdapterVariant v);
AdapterVariant adapter_variant_from_name(const std::string& name);

// Trainable set: the projection network (or query-token resampler) plus, for
// decoupled variants, one {W'_k, W'_v} pair per cross-attention site. Names
// live under "adapter/" so they can never collide with base parameters.
struct AdapterWeights {
    AdapterVariant variant = AdapterVariant::global;
    int n_tokens = 4;
    ParamStore params;
    std::string base_fingerprint;
    int64_t trained_steps = 0;
    int trained_batch = 0;
};

// Cross-attention weight lookup handed to unet_forward.
class AdapterParams {
public:
    AdapterParams(const AdapterWeights& weights, CrossAttnMode mode)
        : weights_(&weights), mode_(mode) {}
    CrossAttnMode mode() const { return mode_; }
    const AdapterWeights& weights() const { return *weights_; }

private:
    const AdapterWeights* weights_;
    CrossAttnMode mode_;
};

AdapterWeights init_adapter(const BaseModel& base, AdapterVariant variant, uint64_t seed,
                            int n_tokens = 4);

// linear -> reshape to N tokens -> per-token layer norm. Accepts [d] or [B,d].
Tensor project_global(const Tensor& global, const AdapterWeights& adapter);

// 16 learnable queries cross-attend to the encoder grid through two blocks.
// Accepts [16,d] or [B,16,d].
Tensor resample_grid(const Tensor& grid, const AdapterWeights& adapter);

// Exact element count of the adapter's trainable tensors.
int64_t count_trainable(const AdapterWeights& adapter);

std::string params_fingerprint(const ParamStore& params);

struct ComposedModel {
    std::shared_ptr<BaseModel> base;
    std::optional<AdapterWeights> adapter;
    std::optional<ControlBranch> control;
    bool fingerprint_mismatch = false;

    CrossAttnMode mode() const {
        if (!adapter) {
            return CrossAttnMode::text_only;
        }
        return adapter->variant == AdapterVariant::simple ? CrossAttnMode::simple_concat
                                                          : CrossAttnMode::decoupled;
    }
};

// Shares the base tensors (no copies). A fingerprint mismatch with matching
// shapes is the portability path and only sets a warning flag;
// ShapeIncompatible is raised when any site shape differs.
ComposedModel apply_adapter(std::shared_ptr<BaseModel> base, AdapterWeights adapter);

}  // namespace ipa
