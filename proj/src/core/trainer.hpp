#pragma once

#include <memory>

#include "adapter.hpp"
#include "control.hpp"
#include "encoders.hpp"

namespace ipa {

struct TrainConfig {
    uint64_t seed = 0;
    int steps = 0;
    int batch = 16;
    float lr = 1e-4f;
    float weight_decay = 0.01f;
    // condition dropout: text-only, image-only, both
    float p_drop_text = 0.05f;
    float p_drop_image = 0.05f;
    float p_drop_both = 0.05f;
    // caption-alignment gate applied to base-model samples after training
    float clip_t_gate = 0.30f;
    int gate_samples = 32;
    int gate_ddim_steps = 20;
    float gate_w = 7.5f;

    void validate() const;
};

struct DropoutDecision {
    bool drop_text = false;
    bool drop_image = false;
};

DropoutDecision sample_dropout(Rng& rng, float p_text, float p_image, float p_both);

// drop_text swaps in the empty-caption encoding; drop_image zeroes the global
// embedding before the projection network sees it.
std::pair<TextFeatures, Tensor> apply_dropout(const TextFeatures& text, const Tensor& global,
                                              DropoutDecision decision, const Encoders& enc);

// Mean squared error between true and predicted noise over batch and pixels.
Tensor noise_mse(const Tensor& eps_pred, const Tensor& eps);

struct TrainHistory {
    std::vector<float> losses;
    double smoothed_first() const;
    double smoothed_last() const;
};

struct BaseTrainResult {
    BaseModel model;
    TrainHistory history;
    double gate_clip_t = 0.0;
};

struct AdapterTrainResult {
    AdapterWeights adapter;
    TrainHistory history;
};

struct ControlTrainResult {
    ControlBranch branch;
    TrainHistory history;
};

// Text-conditioned base model from scratch on the procedural scene stream.
BaseTrainResult train_base(const TrainConfig& cfg, const Encoders& enc, const UNetConfig& unet,
                           int T = 1000, ScheduleKind kind = ScheduleKind::linear_beta);

// Adapter on a frozen base; the prompt for each example is its own image.
// FreezeViolation if any frozen byte changes.
AdapterTrainResult train_adapter(const TrainConfig& cfg, std::shared_ptr<BaseModel> base,
                                 const Encoders& enc, AdapterVariant variant);

// Short fine-tune on the triangles-only distribution; returns a same-shape,
// different-weights model.
BaseTrainResult finetune_variant(const TrainConfig& cfg, const BaseModel& base,
                                 const Encoders& enc);

// Control branch on a frozen base with Sobel edge hints.
ControlTrainResult train_control(const TrainConfig& cfg, std::shared_ptr<BaseModel> base,
                                 const Encoders& enc);

// Mean held-out denoising loss with and without matching hints; used by the
// control-compatibility checks.
std::pair<double, double> control_paired_loss(const BaseModel& base, const ControlBranch& branch,
                                              const Encoders& enc, int batches, int batch,
                                              uint64_t seed);

}  // namespace ipa
