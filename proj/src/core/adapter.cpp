#include "adapter.hpp"

#include <cmath>
#include <cstdio>

#include "checkpoint.hpp"

namespace ipa {

const char* adapter_variant_name(AdapterVariant v) {
    switch (v) {
        case AdapterVariant::global: return "global";
        case AdapterVariant::finegrained: return "finegrained";
        case AdapterVariant::simple: return "simple";
    }
    return "unknown";
}

AdapterVariant adapter_variant_from_name(const std::string& name) {
    if (name == "global") {
        return AdapterVariant::global;
    }
    if (name == "finegrained") {
        return AdapterVariant::finegrained;
    }
    if (name == "simple") {
        return AdapterVariant::simple;
    }
    fail(ErrCode::BadArg, "unknown adapter variant: " + name);
}

namespace {

void init_projection(ParamStore& p, int d_ctx, int n_tokens, Rng& rng) {
    p.add("adapter/proj/w", Tensor::randn({d_ctx, n_tokens * d_ctx}, rng, 0.02f));
    p.add("adapter/proj/b", Tensor::zeros({n_tokens * d_ctx}));
    p.add("adapter/proj/ln_g", Tensor::full({d_ctx}, 1.0f));
    p.add("adapter/proj/ln_b", Tensor::zeros({d_ctx}));
}

void init_resampler(ParamStore& p, int d_ctx, int n_tokens, Rng& rng) {
    p.add("adapter/resampler/queries", Tensor::randn({n_tokens, d_ctx}, rng, 0.02f));
    for (int b = 0; b < 2; ++b) {
        const std::string pre = "adapter/resampler/b" + std::to_string(b) + "/";
        p.add(pre + "ln1_g", Tensor::full({d_ctx}, 1.0f));
        p.add(pre + "ln1_b", Tensor::zeros({d_ctx}));
        p.add(pre + "wq", Tensor::randn({d_ctx, d_ctx}, rng, 0.02f));
        p.add(pre + "wk", Tensor::randn({d_ctx, d_ctx}, rng, 0.02f));
        p.add(pre + "wv", Tensor::randn({d_ctx, d_ctx}, rng, 0.02f));
        p.add(pre + "wo", Tensor::randn({d_ctx, d_ctx}, rng, 0.02f));
        p.add(pre + "wo_b", Tensor::zeros({d_ctx}));
        p.add(pre + "ln2_g", Tensor::full({d_ctx}, 1.0f));
        p.add(pre + "ln2_b", Tensor::zeros({d_ctx}));
        p.add(pre + "ff_w1", Tensor::randn({d_ctx, 2 * d_ctx}, rng, 0.02f));
        p.add(pre + "ff_b1", Tensor::zeros({2 * d_ctx}));
        p.add(pre + "ff_w2", Tensor::randn({2 * d_ctx, d_ctx}, rng, 0.02f));
        p.add(pre + "ff_b2", Tensor::zeros({d_ctx}));
    }
    p.add("adapter/resampler/ln_f_g", Tensor::full({d_ctx}, 1.0f));
    p.add("adapter/resampler/ln_f_b", Tensor::zeros({d_ctx}));
}

}  // namespace

AdapterWeights init_adapter(const BaseModel& base, AdapterVariant variant, uint64_t seed,
                            int n_tokens) {
    const UNetConfig& cfg = base.cfg;
    const std::vector<int> site_ch = cfg.cross_site_channels();
    require(!site_ch.empty(), ErrCode::MissingBaseWeights, "base model has no cross-attention sites");

    AdapterWeights adapter;
    adapter.variant = variant;
    adapter.n_tokens = variant == AdapterVariant::finegrained ? 16 : n_tokens;
    adapter.base_fingerprint = params_fingerprint(base.params);
    Rng rng(mix64(seed, 0xada91e8));

    if (variant == AdapterVariant::finegrained) {
        init_resampler(adapter.params, cfg.d_ctx, adapter.n_tokens, rng);
    } else {
        init_projection(adapter.params, cfg.d_ctx, adapter.n_tokens, rng);
    }

    if (variant != AdapterVariant::simple) {
        // site enumeration mirrors the forward order used by unet_forward
        std::vector<std::string> prefixes;
        for (int l = 0; l < cfg.levels(); ++l) {
            if (cfg.attn_at(l)) {
                prefixes.push_back("unet/down" + std::to_string(l) + "/attn");
            }
        }
        if (cfg.attn_at(cfg.levels() - 1)) {
            prefixes.push_back("unet/mid/attn");
        }
        for (int l = cfg.levels() - 1; l >= 0; --l) {
            if (cfg.attn_at(l)) {
                prefixes.push_back("unet/up" + std::to_string(l) + "/attn");
            }
        }
        for (size_t i = 0; i < prefixes.size(); ++i) {
            const std::string wk_name = prefixes[i] + "/cross_wk";
            const std::string wv_name = prefixes[i] + "/cross_wv";
            require(base.params.contains(wk_name) && base.params.contains(wv_name),
                    ErrCode::MissingBaseWeights, "base model lacks " + wk_name);
            const std::string spre = "adapter/site" + std::to_string(i) + "/";
            adapter.params.add(spre + "wk", base.params.at(wk_name).detach_copy());
            adapter.params.add(spre + "wv", base.params.at(wv_name).detach_copy());
        }
    }
    return adapter;
}

Tensor project_global(const Tensor& global, const AdapterWeights& adapter) {
    require(adapter.variant != AdapterVariant::finegrained, ErrCode::BadArg,
            "fine-grained adapter consumes grid features, not the global embedding");
    const ParamStore& p = adapter.params;
    const Tensor& w = p.at("adapter/proj/w");
    const int64_t d_ctx = w.dim(0);
    const int n = adapter.n_tokens;
    const bool batched = global.shape().size() == 2;
    require((batched && global.dim(1) == d_ctx) ||
                (!batched && global.shape() == Shape{d_ctx}),
            ErrCode::ShapeMismatch, "project_global expects [d] or [B,d]");
    Tensor x = batched ? global : reshape(global, {1, d_ctx});
    const int64_t b = x.dim(0);
    Tensor tokens = reshape(linear(x, w, p.at("adapter/proj/b")), {b, n, d_ctx});
    tokens = layer_norm(tokens, p.at("adapter/proj/ln_g"), p.at("adapter/proj/ln_b"));
    return batched ? tokens : reshape(tokens, {n, d_ctx});
}

Tensor resample_grid(const Tensor& grid, const AdapterWeights& adapter) {
    require(adapter.variant == AdapterVariant::finegrained, ErrCode::BadArg,
            "resample_grid needs the fine-grained adapter");
    const ParamStore& p = adapter.params;
    const Tensor& queries = p.at("adapter/resampler/queries");
    const int64_t n = queries.dim(0);
    const int64_t d = queries.dim(1);
    const bool batched = grid.shape().size() == 3;
    Tensor g = batched ? grid : reshape(grid, {1, grid.dim(0), grid.dim(1)});
    require(g.dim(2) == d, ErrCode::ShapeMismatch, "grid width mismatch");
    const int64_t b = g.dim(0);
    // broadcast the learnable queries over the batch
    Tensor x = add(reshape(queries, {1, n, d}), Tensor::zeros({b, 1, 1}));
    for (int blk = 0; blk < 2; ++blk) {
        const std::string pre = "adapter/resampler/b" + std::to_string(blk) + "/";
        Tensor hn = layer_norm(x, p.at(pre + "ln1_g"), p.at(pre + "ln1_b"));
        Tensor q = split_heads(matmul(hn, p.at(pre + "wq")), 4);
        Tensor k = split_heads(matmul(g, p.at(pre + "wk")), 4);
        Tensor v = split_heads(matmul(g, p.at(pre + "wv")), 4);
        x = add(x, linear(merge_heads(attention(q, k, v)), p.at(pre + "wo"),
                          p.at(pre + "wo_b")));
        hn = layer_norm(x, p.at(pre + "ln2_g"), p.at(pre + "ln2_b"));
        x = add(x, linear(silu(linear(hn, p.at(pre + "ff_w1"), p.at(pre + "ff_b1"))),
                          p.at(pre + "ff_w2"), p.at(pre + "ff_b2")));
    }
    x = layer_norm(x, p.at("adapter/resampler/ln_f_g"), p.at("adapter/resampler/ln_f_b"));
    return batched ? x : reshape(x, {n, d});
}

int64_t count_trainable(const AdapterWeights& adapter) {
    int64_t total = 0;
    for (const auto& [name, tensor] : adapter.params.entries()) {
        total += tensor.numel();
    }
    return total;
}

std::string params_fingerprint(const ParamStore& params) {
    return sha256_hex(params.byte_image());
}

ComposedModel apply_adapter(std::shared_ptr<BaseModel> base, AdapterWeights adapter) {
    const std::vector<int> site_ch = base->cfg.cross_site_channels();
    if (adapter.variant != AdapterVariant::simple) {
        for (size_t i = 0; i < site_ch.size(); ++i) {
            const std::string spre = "adapter/site" + std::to_string(i) + "/";
            require(adapter.params.contains(spre + "wk"), ErrCode::ShapeIncompatible,
                    "adapter lacks weights for site " + std::to_string(i));
            const Shape expect = {base->cfg.d_ctx, site_ch[i]};
            require(adapter.params.at(spre + "wk").shape() == expect &&
                        adapter.params.at(spre + "wv").shape() == expect,
                    ErrCode::ShapeIncompatible,
                    "adapter site " + std::to_string(i) + " expects " + shape_str(expect));
        }
        require(!adapter.params.contains("adapter/site" + std::to_string(site_ch.size()) + "/wk"),
                ErrCode::ShapeIncompatible, "adapter has more sites than the base model");
    }
    ComposedModel composed;
    composed.fingerprint_mismatch = adapter.base_fingerprint != params_fingerprint(base->params);
    if (composed.fingerprint_mismatch) {
        std::fprintf(stderr,
                     "warning: adapter fingerprint does not match the base model; "
                     "composing anyway (portability path)\n");
    }
    composed.base = std::move(base);
    composed.adapter = std::move(adapter);
    return composed;
}

}  // namespace ipa
