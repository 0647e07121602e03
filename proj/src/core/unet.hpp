#pragma once

#include <algorithm>
#include <optional>
#include <string>

#include "ops.hpp"
#include "param_store.hpp"
#include "schedule.hpp"

namespace ipa {

struct UNetConfig {
    int image_size = 32;
    int in_channels = 3;
    int base_channels = 32;
    std::vector<int> channel_mult = {1, 2, 2};
    std::vector<int> attn_resolutions = {16, 8};
    int heads = 4;
    int d_ctx = 64;

    int levels() const { return static_cast<int>(channel_mult.size()); }
    int channels(int level) const { return base_channels * channel_mult[level]; }
    int resolution(int level) const { return image_size >> level; }
    bool attn_at(int level) const {
        return std::find(attn_resolutions.begin(), attn_resolutions.end(), resolution(level)) !=
               attn_resolutions.end();
    }
    int sin_dim() const { return std::max(16, base_channels * 2); }
    int temb_dim() const { return base_channels * 4; }

    // Attention sites in forward order: down levels, middle, up levels.
    // The default config instantiates 5.
    int num_cross_layers() const { return static_cast<int>(cross_site_channels().size()); }
    std::vector<int> cross_site_channels() const;

    std::string to_json() const;
    static UNetConfig from_json(const std::string& text);
};

enum class CrossAttnMode { text_only, decoupled, simple_concat };

struct CondBundle {
    Tensor text_tokens;            // [B, L, d_ctx]
    std::optional<Tensor> text_mask;  // additive bias, broadcastable to scores
    Tensor image_tokens;           // undefined unless an image stream is active
    float lambda_weight = 1.0f;
};

// Weight view of one cross-attention site; the image-stream pair is present
// only in decoupled mode.
struct CrossAttnBlockView {
    Tensor wq, wk, wv, wo, wo_b;
    Tensor wk_img, wv_img;
    CrossAttnMode mode = CrossAttnMode::text_only;
    int heads = 4;
};

Tensor timestep_embed(int t, int dim);
Tensor timestep_embed_batch(const std::vector<int>& t, int dim);

Tensor split_heads(const Tensor& x, int heads);
Tensor merge_heads(const Tensor& x);

Tensor cross_attn_text(const Tensor& z, const Tensor& c_t, const std::optional<Tensor>& mask,
                       const CrossAttnBlockView& blk);
// Text stream plus lambda-scaled image stream sharing the query; the two
// attention outputs are summed before the shared output projection.
// lambda == 0 short-circuits to the exact text-only path.
Tensor cross_attn_decoupled(const Tensor& z, const Tensor& c_t, const std::optional<Tensor>& mask,
                            const Tensor& c_i, float lambda_weight,
                            const CrossAttnBlockView& blk);
Tensor cross_attn_simple_concat(const Tensor& z, const Tensor& c_t,
                                const std::optional<Tensor>& mask, const Tensor& c_i,
                                const CrossAttnBlockView& blk);

struct BaseModel {
    UNetConfig cfg;
    ParamStore params;
    int T = 1000;
    ScheduleKind schedule_kind = ScheduleKind::linear_beta;

    static BaseModel init(const UNetConfig& cfg, uint64_t seed, int T = 1000,
                          ScheduleKind kind = ScheduleKind::linear_beta);
    BaseModel clone() const;
};

class AdapterParams;  // adapter weight lookup, defined in adapter.hpp

// Full denoiser forward. Mode is text_only when adapter_sites is null; the
// adapter decides decoupled vs simple_concat. Control residuals, when given,
// must hold one tensor per level with matching feature shapes.
Tensor unet_forward(const BaseModel& base, const AdapterParams* adapter_sites, const Tensor& x,
                    const std::vector<int>& t, const CondBundle& cond,
                    const std::vector<Tensor>* control_residuals);

// Largest group count <= 8 dividing the channel count.
int norm_groups(int channels);

}  // namespace ipa
