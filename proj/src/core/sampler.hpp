#pragma once

#include "adapter.hpp"
#include "encoders.hpp"

namespace ipa {

struct SampleRequest {
    std::string caption;                 // empty string = image-only mode
    std::optional<Tensor> prompt_image;  // [3,32,32]
    float lambda_weight = 1.0f;
    float w = 7.5f;
    int steps = 50;
    float eta = 0.0f;
    uint64_t seed = 0;
    std::optional<Tensor> hint;          // [1,32,32], needs a control branch
};

// Seeded DDIM sampling with joint classifier-free guidance. The conditional
// branch sees (c_t, c_i, lambda); the unconditional branch sees the
// empty-caption encoding and the zeroed image embedding. w == 1 never
// evaluates the unconditional branch. The result is clamped to [-1,1].
Tensor sample(const SampleRequest& req, const ComposedModel& model, const Encoders& enc);

// Condition bundles used by sample(); exposed for tests and custom loops.
CondBundle build_cond(const std::string& caption, const Tensor* prompt_image,
                      float lambda_weight, const ComposedModel& model, const Encoders& enc);

}  // namespace ipa
