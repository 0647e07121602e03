#pragma once

#include "param_store.hpp"

namespace ipa {

struct UNetConfig;

// Minimal additive conditioning branch: a small conv trunk over the edge-hint
// map with one zero-initialized 1x1 head per UNet level, so a fresh branch
// contributes exactly nothing.
struct ControlBranch {
    ParamStore params;
    bool enabled = true;
    std::vector<int> trunk_channels;  // per level
    std::vector<int> head_channels;   // per level, matches UNet level channels

    static ControlBranch init(const UNetConfig& cfg, uint64_t seed);
};

// Residual tensors per level, shaped [B, C_level, res_level, res_level].
std::vector<Tensor> control_forward(const Tensor& hint, const ControlBranch& branch,
                                    const UNetConfig& cfg);

}  // namespace ipa
