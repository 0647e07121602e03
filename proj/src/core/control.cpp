#include "control.hpp"

#include <cmath>

#include "ops.hpp"
#include "unet.hpp"

namespace ipa {

ControlBranch ControlBranch::init(const UNetConfig& cfg, uint64_t seed) {
    ControlBranch branch;
    Rng rng(mix64(seed, 0xc0927201));
    int prev = 1;
    for (int l = 0; l < cfg.levels(); ++l) {
        const int tch = l == 0 ? 16 : 32;
        branch.trunk_channels.push_back(tch);
        branch.head_channels.push_back(cfg.channels(l));
        const std::string pre = "ctrl/c" + std::to_string(l) + "/";
        branch.params.add(pre + "w",
                          Tensor::randn({tch, prev, 3, 3}, rng,
                                        1.0f / std::sqrt(static_cast<float>(prev * 9))));
        branch.params.add(pre + "b", Tensor::zeros({tch}));
        // zero-init heads: a fresh branch adds exactly nothing
        branch.params.add("ctrl/head" + std::to_string(l) + "/w",
                          Tensor::zeros({cfg.channels(l), tch, 1, 1}));
        branch.params.add("ctrl/head" + std::to_string(l) + "/b",
                          Tensor::zeros({cfg.channels(l)}));
        prev = tch;
    }
    return branch;
}

std::vector<Tensor> control_forward(const Tensor& hint, const ControlBranch& branch,
                                    const UNetConfig& cfg) {
    require(branch.enabled, ErrCode::Disabled, "control branch is disabled");
    const Shape& s = hint.shape();
    require(s.size() == 4 && s[1] == 1 && s[2] == cfg.image_size && s[3] == cfg.image_size,
            ErrCode::ShapeMismatch, "hint must be [B,1,image_size,image_size]");
    std::vector<Tensor> residuals;
    Tensor h = hint;
    for (int l = 0; l < cfg.levels(); ++l) {
        const std::string pre = "ctrl/c" + std::to_string(l) + "/";
        h = silu(conv2d(h, branch.params.at(pre + "w"), branch.params.at(pre + "b"),
                        l == 0 ? 1 : 2, 1));
        residuals.push_back(conv2d(h, branch.params.at("ctrl/head" + std::to_string(l) + "/w"),
                                   branch.params.at("ctrl/head" + std::to_string(l) + "/b"), 1,
                                   0));
    }
    return residuals;
}

}  // namespace ipa
