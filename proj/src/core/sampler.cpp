#include "sampler.hpp"

#include <algorithm>

namespace ipa {

CondBundle build_cond(const std::string& caption, const Tensor* prompt_image,
                      float lambda_weight, const ComposedModel& model, const Encoders& enc) {
    const Vocabulary& vocab = Vocabulary::standard();
    Encoders::TextBatch text = enc.text_forward({tokenize(caption, vocab)});
    CondBundle cond;
    cond.text_tokens = text.tokens;
    cond.text_mask = text.mask_bias;
    cond.lambda_weight = lambda_weight;
    if (model.adapter) {
        const AdapterWeights& adapter = *model.adapter;
        if (adapter.variant == AdapterVariant::finegrained) {
            Tensor grid = prompt_image
                              ? enc.image_forward(reshape(*prompt_image, {1, 3, kImageSize,
                                                                          kImageSize}))
                                    .grid
                              : Tensor::zeros({1, 16, enc.cfg.d_ctx});
            cond.image_tokens = resample_grid(grid, adapter);
        } else {
            Tensor global = prompt_image
                                ? enc.image_forward(reshape(*prompt_image, {1, 3, kImageSize,
                                                                            kImageSize}))
                                      .global
                                : Tensor::zeros({1, enc.cfg.d_ctx});
            cond.image_tokens = project_global(global, adapter);
        }
    }
    return cond;
}

Tensor sample(const SampleRequest& req, const ComposedModel& model, const Encoders& enc) {
    require(model.base != nullptr, ErrCode::InvalidRequest, "no base model loaded");
    require(!req.caption.empty() || req.prompt_image.has_value(), ErrCode::InvalidRequest,
            "need a caption, an image prompt, or both");
    require(req.prompt_image.has_value() ? model.adapter.has_value() : true,
            ErrCode::InvalidRequest, "image prompt given but no adapter is attached");
    require(req.steps >= 1 && req.steps <= model.base->T, ErrCode::InvalidRequest,
            "sampler steps out of range");
    require(req.eta >= 0.0f && req.eta <= 1.0f, ErrCode::InvalidRequest, "eta must be in [0,1]");
    require(req.lambda_weight >= 0.0f, ErrCode::InvalidRequest, "lambda must be >= 0");
    require(req.hint.has_value() ? model.control.has_value() : true, ErrCode::InvalidRequest,
            "hint given but no control branch is attached");

    NoGradGuard ng;
    const BaseModel& base = *model.base;
    const NoiseSchedule sched = build_schedule(base.T, base.schedule_kind);

    const Tensor* prompt = req.prompt_image ? &*req.prompt_image : nullptr;
    CondBundle cond = build_cond(req.caption, prompt, req.lambda_weight, model, enc);
    CondBundle uncond;
    if (req.w != 1.0f) {
        uncond = build_cond("", nullptr, req.lambda_weight, model, enc);
    }

    std::optional<AdapterParams> adapter_params;
    if (model.adapter) {
        adapter_params.emplace(*model.adapter, model.mode());
    }
    const AdapterParams* ap = adapter_params ? &*adapter_params : nullptr;

    std::optional<std::vector<Tensor>> residuals;
    if (req.hint) {
        residuals = control_forward(reshape(*req.hint, {1, 1, kImageSize, kImageSize}),
                                    *model.control, base.cfg);
    }
    const std::vector<Tensor>* ctrl = residuals ? &*residuals : nullptr;

    Rng rng(req.seed);
    Tensor x = Tensor::randn({1, base.cfg.in_channels, base.cfg.image_size, base.cfg.image_size},
                             rng);
    const std::vector<int> grid = make_step_grid(base.T, req.steps);
    for (size_t i = 0; i < grid.size(); ++i) {
        const int t = grid[i];
        const int t_prev = i + 1 < grid.size() ? grid[i + 1] : 0;
        Tensor eps = unet_forward(base, ap, x, {t}, cond, ctrl);
        if (req.w != 1.0f) {
            Tensor eps_u = unet_forward(base, ap, x, {t}, uncond, ctrl);
            eps = cfg_combine(eps, eps_u, req.w);
        }
        Tensor noise;
        const Tensor* noise_ptr = nullptr;
        if (req.eta > 0.0f && t_prev > 0) {
            noise = Tensor::randn(x.shape(), rng);
            noise_ptr = &noise;
        }
        x = ddim_step(x, eps, t, t_prev, sched, req.eta, noise_ptr);
    }
    for (float& v : x.values()) {
        v = std::clamp(v, -1.0f, 1.0f);
    }
    return reshape(x, {base.cfg.in_channels, base.cfg.image_size, base.cfg.image_size});
}

}  // namespace ipa
