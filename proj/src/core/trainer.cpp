#include "trainer.hpp"

#include <cmath>
#include <cstring>

#include "metrics.hpp"
#include "sampler.hpp"

namespace ipa {

namespace {

struct RawBatch {
    Tensor x0;  // [B,3,32,32]
    std::vector<std::string> captions;
    std::vector<Tensor> images;  // per-example views for encoders
};

RawBatch gather_batch(uint64_t data_seed, uint64_t index0, int batch, bool triangles_only) {
    RawBatch out;
    std::vector<float> pixels;
    pixels.reserve(static_cast<size_t>(batch) * 3 * kImageSize * kImageSize);
    for (int j = 0; j < batch; ++j) {
        Example ex = triangles_only
                         ? gen_example_triangles(data_seed, index0 + static_cast<uint64_t>(j))
                         : gen_example(data_seed, index0 + static_cast<uint64_t>(j));
        pixels.insert(pixels.end(), ex.image.values().begin(), ex.image.values().end());
        out.captions.push_back(std::move(ex.caption));
        out.images.push_back(std::move(ex.image));
    }
    out.x0 = Tensor::from_data({batch, 3, kImageSize, kImageSize}, std::move(pixels));
    return out;
}

struct NoisedBatch {
    Tensor x_t;
    Tensor eps;
    std::vector<int> t;
};

NoisedBatch make_noised(const Tensor& x0, const NoiseSchedule& sched, Rng& rng) {
    const int64_t batch = x0.dim(0);
    const int64_t per = x0.numel() / batch;
    NoisedBatch out;
    out.t.resize(batch);
    std::vector<float> eps(x0.numel());
    std::vector<float> x_t(x0.numel());
    for (int64_t b = 0; b < batch; ++b) {
        out.t[b] = static_cast<int>(rng.uniform_int(1, sched.T));
        const float a = sched.alpha[out.t[b]];
        const float s = sched.sigma[out.t[b]];
        const float* xv = x0.data() + b * per;
        for (int64_t i = 0; i < per; ++i) {
            const float e = rng.normal_f32();
            eps[b * per + i] = e;
            x_t[b * per + i] = std::fmaf(a, xv[i], s * e);
        }
    }
    out.eps = Tensor::from_data(x0.shape(), std::move(eps));
    out.x_t = Tensor::from_data(x0.shape(), std::move(x_t));
    return out;
}

CondBundle text_cond(const Encoders& enc, const std::vector<std::string>& captions) {
    const Vocabulary& vocab = Vocabulary::standard();
    std::vector<std::vector<int>> ids;
    ids.reserve(captions.size());
    for (const std::string& c : captions) {
        ids.push_back(tokenize(c, vocab));
    }
    Encoders::TextBatch text = enc.text_forward(ids);
    CondBundle cond;
    cond.text_tokens = text.tokens;
    cond.text_mask = text.mask_bias;
    return cond;
}

double window_mean(const std::vector<float>& v, size_t start, size_t count) {
    double acc = 0.0;
    for (size_t i = start; i < start + count && i < v.size(); ++i) {
        acc += v[i];
    }
    return count ? acc / static_cast<double>(count) : 0.0;
}

}  // namespace

void TrainConfig::validate() const {
    require(steps >= 0 && batch >= 1, ErrCode::BadArg, "bad training budget");
    require(p_drop_text >= 0.0f && p_drop_text <= 1.0f && p_drop_image >= 0.0f &&
                p_drop_image <= 1.0f && p_drop_both >= 0.0f && p_drop_both <= 1.0f,
            ErrCode::BadArg, "dropout probabilities must lie in [0,1]");
    require(p_drop_text + p_drop_image + p_drop_both <= 1.0f, ErrCode::BadArg,
            "dropout probabilities must not sum above 1");
}

DropoutDecision sample_dropout(Rng& rng, float p_text, float p_image, float p_both) {
    const double u = rng.uniform();
    if (u < p_text) {
        return {true, false};
    }
    if (u < static_cast<double>(p_text) + p_image) {
        return {false, true};
    }
    if (u < static_cast<double>(p_text) + p_image + p_both) {
        return {true, true};
    }
    return {false, false};
}

std::pair<TextFeatures, Tensor> apply_dropout(const TextFeatures& text, const Tensor& global,
                                              DropoutDecision decision, const Encoders& enc) {
    TextFeatures t_out = text;
    if (decision.drop_text) {
        t_out = enc.text_encode(tokenize("", Vocabulary::standard()));
    }
    Tensor g_out = decision.drop_image ? Tensor::zeros(global.shape()) : global;
    return {t_out, g_out};
}

Tensor noise_mse(const Tensor& eps_pred, const Tensor& eps) { return mse(eps_pred, eps); }

double TrainHistory::smoothed_first() const {
    const size_t window = std::min<size_t>(losses.size(), std::max<size_t>(1, losses.size() / 5));
    return window_mean(losses, 0, window);
}

double TrainHistory::smoothed_last() const {
    const size_t window = std::min<size_t>(losses.size(), std::max<size_t>(1, losses.size() / 5));
    return window_mean(losses, losses.size() - window, window);
}

BaseTrainResult train_base(const TrainConfig& cfg, const Encoders& enc, const UNetConfig& unet,
                           int T, ScheduleKind kind) {
    cfg.validate();
    require(enc.frozen, ErrCode::NotFrozen, "train_base needs frozen encoders");
    BaseTrainResult result{BaseModel::init(unet, mix64(cfg.seed, 0xba5e), T, kind), {}, 0.0};
    BaseModel& model = result.model;
    const NoiseSchedule sched = build_schedule(T, kind);
    OptimState opt = OptimState::create(model.params, cfg.lr, cfg.weight_decay);
    const uint64_t data_seed = mix64(cfg.seed, 0xda7a);

    for (int step = 0; step < cfg.steps; ++step) {
        Rng rng(mix64(mix64(cfg.seed, 0x57e9), static_cast<uint64_t>(step)));
        RawBatch batch = gather_batch(data_seed, static_cast<uint64_t>(step) * cfg.batch,
                                      cfg.batch, false);
        for (std::string& caption : batch.captions) {
            if (sample_dropout(rng, cfg.p_drop_text, 0.0f, 0.0f).drop_text) {
                caption.clear();
            }
        }
        const NoisedBatch noised = make_noised(batch.x0, sched, rng);
        const CondBundle cond = text_cond(enc, batch.captions);
        Tensor eps_pred = unet_forward(model, nullptr, noised.x_t, noised.t, cond, nullptr);
        Tensor loss = noise_mse(eps_pred, noised.eps);
        result.history.losses.push_back(loss.values()[0]);
        backward_params(loss, model.params);
        adamw_step(model.params, opt);
    }

    if (cfg.steps > 0) {
        require(result.history.smoothed_last() < result.history.smoothed_first(),
                ErrCode::DidNotConverge, "base training loss did not decrease");
        // caption-alignment gate on fresh samples
        ComposedModel composed;
        composed.base = std::make_shared<BaseModel>(model.clone());
        double acc = 0.0;
        for (int i = 0; i < cfg.gate_samples; ++i) {
            Example ex = gen_example(data_seed, kHeldOutBase + static_cast<uint64_t>(i));
            SampleRequest req;
            req.caption = ex.caption;
            req.w = cfg.gate_w;
            req.steps = cfg.gate_ddim_steps;
            req.seed = mix64(cfg.seed, 0x9a7e + static_cast<uint64_t>(i));
            Tensor gen = sample(req, composed, enc);
            acc += clip_t(gen, ex.caption, enc);
        }
        result.gate_clip_t = acc / std::max(1, cfg.gate_samples);
        require(result.gate_clip_t >= cfg.clip_t_gate, ErrCode::DidNotConverge,
                "sampled caption alignment " + std::to_string(result.gate_clip_t) +
                    " below gate " + std::to_string(cfg.clip_t_gate));
    }
    return result;
}

AdapterTrainResult train_adapter(const TrainConfig& cfg, std::shared_ptr<BaseModel> base,
                                 const Encoders& enc, AdapterVariant variant) {
    cfg.validate();
    require(enc.frozen, ErrCode::NotFrozen, "train_adapter needs frozen encoders");
    base->params.freeze_all();
    const std::string base_hash_before = params_fingerprint(base->params);
    const std::string enc_hash_before = params_fingerprint(enc.params);

    AdapterTrainResult result{init_adapter(*base, variant, mix64(cfg.seed, 0xad40), 4), {}};
    AdapterWeights& adapter = result.adapter;
    const NoiseSchedule sched = build_schedule(base->T, base->schedule_kind);
    OptimState opt = OptimState::create(adapter.params, cfg.lr, cfg.weight_decay);
    const uint64_t data_seed = mix64(cfg.seed, 0xda7a);
    const CrossAttnMode mode =
        variant == AdapterVariant::simple ? CrossAttnMode::simple_concat : CrossAttnMode::decoupled;
    const AdapterParams adapter_params(adapter, mode);

    for (int step = 0; step < cfg.steps; ++step) {
        Rng rng(mix64(mix64(cfg.seed, 0x57e9), static_cast<uint64_t>(step)));
        RawBatch batch = gather_batch(data_seed, static_cast<uint64_t>(step) * cfg.batch,
                                      cfg.batch, false);
        std::vector<DropoutDecision> drops(cfg.batch);
        for (int j = 0; j < cfg.batch; ++j) {
            drops[j] = sample_dropout(rng, cfg.p_drop_text, cfg.p_drop_image, cfg.p_drop_both);
            if (drops[j].drop_text) {
                batch.captions[j].clear();
            }
        }
        const NoisedBatch noised = make_noised(batch.x0, sched, rng);
        CondBundle cond = text_cond(enc, batch.captions);
        cond.lambda_weight = 1.0f;

        // the prompt for each example is its own image; a dropped image
        // condition zeroes the embedding before the projection network
        if (variant == AdapterVariant::finegrained) {
            Tensor grid = enc.image_forward(batch.x0).grid;
            std::vector<float> masked(grid.values());
            const int64_t per = grid.numel() / cfg.batch;
            for (int j = 0; j < cfg.batch; ++j) {
                if (drops[j].drop_image) {
                    std::memset(masked.data() + j * per, 0, per * sizeof(float));
                }
            }
            cond.image_tokens =
                resample_grid(Tensor::from_data(grid.shape(), std::move(masked)), adapter);
        } else {
            Tensor global = enc.image_forward(batch.x0).global;
            std::vector<float> masked(global.values());
            const int64_t per = global.numel() / cfg.batch;
            for (int j = 0; j < cfg.batch; ++j) {
                if (drops[j].drop_image) {
                    std::memset(masked.data() + j * per, 0, per * sizeof(float));
                }
            }
            cond.image_tokens =
                project_global(Tensor::from_data(global.shape(), std::move(masked)), adapter);
        }

        Tensor eps_pred =
            unet_forward(*base, &adapter_params, noised.x_t, noised.t, cond, nullptr);
        Tensor loss = noise_mse(eps_pred, noised.eps);
        result.history.losses.push_back(loss.values()[0]);
        backward_params(loss, adapter.params);
        adamw_step(adapter.params, opt);
    }

    require(params_fingerprint(base->params) == base_hash_before, ErrCode::FreezeViolation,
            "base model bytes changed during adapter training");
    require(params_fingerprint(enc.params) == enc_hash_before, ErrCode::FreezeViolation,
            "encoder bytes changed during adapter training");
    adapter.trained_steps = cfg.steps;
    adapter.trained_batch = cfg.batch;
    return result;
}

BaseTrainResult finetune_variant(const TrainConfig& cfg, const BaseModel& base,
                                 const Encoders& enc) {
    cfg.validate();
    require(enc.frozen, ErrCode::NotFrozen, "finetune_variant needs frozen encoders");
    BaseTrainResult result{base.clone(), {}, 0.0};
    BaseModel& model = result.model;
    for (const std::string& name : model.params.names()) {
        model.params.at(name).set_requires_grad(true);
    }
    const NoiseSchedule sched = build_schedule(model.T, model.schedule_kind);
    OptimState opt = OptimState::create(model.params, cfg.lr, cfg.weight_decay);
    const uint64_t data_seed = mix64(cfg.seed, 0x774a);

    for (int step = 0; step < cfg.steps; ++step) {
        Rng rng(mix64(mix64(cfg.seed, 0x57e9), static_cast<uint64_t>(step)));
        RawBatch batch = gather_batch(data_seed, static_cast<uint64_t>(step) * cfg.batch,
                                      cfg.batch, true);
        for (std::string& caption : batch.captions) {
            if (sample_dropout(rng, cfg.p_drop_text, 0.0f, 0.0f).drop_text) {
                caption.clear();
            }
        }
        const NoisedBatch noised = make_noised(batch.x0, sched, rng);
        const CondBundle cond = text_cond(enc, batch.captions);
        Tensor eps_pred = unet_forward(model, nullptr, noised.x_t, noised.t, cond, nullptr);
        Tensor loss = noise_mse(eps_pred, noised.eps);
        result.history.losses.push_back(loss.values()[0]);
        backward_params(loss, model.params);
        adamw_step(model.params, opt);
    }
    return result;
}

ControlTrainResult train_control(const TrainConfig& cfg, std::shared_ptr<BaseModel> base,
                                 const Encoders& enc) {
    cfg.validate();
    require(enc.frozen, ErrCode::NotFrozen, "train_control needs frozen encoders");
    base->params.freeze_all();
    const std::string base_hash_before = params_fingerprint(base->params);

    ControlTrainResult result{ControlBranch::init(base->cfg, mix64(cfg.seed, 0xc791)), {}};
    ControlBranch& branch = result.branch;
    const NoiseSchedule sched = build_schedule(base->T, base->schedule_kind);
    OptimState opt = OptimState::create(branch.params, cfg.lr, cfg.weight_decay);
    const uint64_t data_seed = mix64(cfg.seed, 0xda7a);

    for (int step = 0; step < cfg.steps; ++step) {
        Rng rng(mix64(mix64(cfg.seed, 0x57e9), static_cast<uint64_t>(step)));
        RawBatch batch = gather_batch(data_seed, static_cast<uint64_t>(step) * cfg.batch,
                                      cfg.batch, false);
        std::vector<float> hints;
        hints.reserve(static_cast<size_t>(cfg.batch) * kImageSize * kImageSize);
        for (const Tensor& img : batch.images) {
            Tensor h = edge_hint(img);
            hints.insert(hints.end(), h.values().begin(), h.values().end());
        }
        Tensor hint_batch =
            Tensor::from_data({cfg.batch, 1, kImageSize, kImageSize}, std::move(hints));
        const NoisedBatch noised = make_noised(batch.x0, sched, rng);
        const CondBundle cond = text_cond(enc, batch.captions);
        const std::vector<Tensor> residuals = control_forward(hint_batch, branch, base->cfg);
        Tensor eps_pred = unet_forward(*base, nullptr, noised.x_t, noised.t, cond, &residuals);
        Tensor loss = noise_mse(eps_pred, noised.eps);
        result.history.losses.push_back(loss.values()[0]);
        backward_params(loss, branch.params);
        adamw_step(branch.params, opt);
    }

    require(params_fingerprint(base->params) == base_hash_before, ErrCode::FreezeViolation,
            "base model bytes changed during control training");
    return result;
}

std::pair<double, double> control_paired_loss(const BaseModel& base, const ControlBranch& branch,
                                              const Encoders& enc, int batches, int batch,
                                              uint64_t seed) {
    NoGradGuard ng;
    const NoiseSchedule sched = build_schedule(base.T, base.schedule_kind);
    double with_hint = 0.0;
    double zero_hint = 0.0;
    for (int b = 0; b < batches; ++b) {
        Rng rng(mix64(seed, 0xeb41 + static_cast<uint64_t>(b)));
        RawBatch rb = gather_batch(mix64(seed, 0xda7a),
                                   kHeldOutBase + static_cast<uint64_t>(b) * batch, batch, false);
        std::vector<float> hints;
        for (const Tensor& img : rb.images) {
            Tensor h = edge_hint(img);
            hints.insert(hints.end(), h.values().begin(), h.values().end());
        }
        Tensor hint_batch = Tensor::from_data({batch, 1, kImageSize, kImageSize},
                                              std::move(hints));
        Tensor zeros = Tensor::zeros({batch, 1, kImageSize, kImageSize});
        const NoisedBatch noised = make_noised(rb.x0, sched, rng);
        const CondBundle cond = text_cond(enc, rb.captions);
        const std::vector<Tensor> res_hint = control_forward(hint_batch, branch, base.cfg);
        const std::vector<Tensor> res_zero = control_forward(zeros, branch, base.cfg);
        with_hint += noise_mse(unet_forward(base, nullptr, noised.x_t, noised.t, cond, &res_hint),
                               noised.eps)
                         .values()[0];
        zero_hint += noise_mse(unet_forward(base, nullptr, noised.x_t, noised.t, cond, &res_zero),
                               noised.eps)
                         .values()[0];
    }
    return {with_hint / batches, zero_hint / batches};
}

}  // namespace ipa
