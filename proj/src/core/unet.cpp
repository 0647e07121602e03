#include "unet.hpp"

#include <cmath>

#include "adapter.hpp"
#include "json.hpp"

namespace ipa {

namespace {

constexpr const char* kU = "unet/";

std::string lvl(const char* which, int l) { return std::string(kU) + which + std::to_string(l); }

void init_res_block(ParamStore& p, const std::string& pre, int in_ch, int out_ch, int temb_dim,
                    Rng& rng) {
    const float w1_std = 1.0f / std::sqrt(static_cast<float>(in_ch * 9));
    p.add(pre + "/gn1_g", Tensor::full({in_ch}, 1.0f));
    p.add(pre + "/gn1_b", Tensor::zeros({in_ch}));
    p.add(pre + "/conv1/w", Tensor::randn({out_ch, in_ch, 3, 3}, rng, w1_std));
    p.add(pre + "/conv1/b", Tensor::zeros({out_ch}));
    p.add(pre + "/temb/w",
          Tensor::randn({temb_dim, out_ch}, rng, 1.0f / std::sqrt(static_cast<float>(temb_dim))));
    p.add(pre + "/temb/b", Tensor::zeros({out_ch}));
    p.add(pre + "/gn2_g", Tensor::full({out_ch}, 1.0f));
    p.add(pre + "/gn2_b", Tensor::zeros({out_ch}));
    // zero-init second conv: a fresh block is the identity plus skip path
    p.add(pre + "/conv2/w", Tensor::zeros({out_ch, out_ch, 3, 3}));
    p.add(pre + "/conv2/b", Tensor::zeros({out_ch}));
    if (in_ch != out_ch) {
        p.add(pre + "/skip/w",
              Tensor::randn({out_ch, in_ch, 1, 1}, rng, 1.0f / std::sqrt(static_cast<float>(in_ch))));
        p.add(pre + "/skip/b", Tensor::zeros({out_ch}));
    }
}

void init_attn_block(ParamStore& p, const std::string& pre, int ch, int d_ctx, Rng& rng) {
    const float std_c = 1.0f / std::sqrt(static_cast<float>(ch));
    const float std_ctx = 1.0f / std::sqrt(static_cast<float>(d_ctx));
    p.add(pre + "/ln1_g", Tensor::full({ch}, 1.0f));
    p.add(pre + "/ln1_b", Tensor::zeros({ch}));
    p.add(pre + "/self_wq", Tensor::randn({ch, ch}, rng, std_c));
    p.add(pre + "/self_wk", Tensor::randn({ch, ch}, rng, std_c));
    p.add(pre + "/self_wv", Tensor::randn({ch, ch}, rng, std_c));
    p.add(pre + "/self_wo", Tensor::zeros({ch, ch}));
    p.add(pre + "/self_wo_b", Tensor::zeros({ch}));
    p.add(pre + "/ln2_g", Tensor::full({ch}, 1.0f));
    p.add(pre + "/ln2_b", Tensor::zeros({ch}));
    p.add(pre + "/cross_wq", Tensor::randn({ch, ch}, rng, std_c));
    p.add(pre + "/cross_wk", Tensor::randn({d_ctx, ch}, rng, std_ctx));
    p.add(pre + "/cross_wv", Tensor::randn({d_ctx, ch}, rng, std_ctx));
    p.add(pre + "/cross_wo", Tensor::zeros({ch, ch}));
    p.add(pre + "/cross_wo_b", Tensor::zeros({ch}));
    p.add(pre + "/ln3_g", Tensor::full({ch}, 1.0f));
    p.add(pre + "/ln3_b", Tensor::zeros({ch}));
    p.add(pre + "/ff_w1", Tensor::randn({ch, 2 * ch}, rng, std_c));
    p.add(pre + "/ff_b1", Tensor::zeros({2 * ch}));
    p.add(pre + "/ff_w2",
          Tensor::randn({2 * ch, ch}, rng, 1.0f / std::sqrt(static_cast<float>(2 * ch))));
    p.add(pre + "/ff_b2", Tensor::zeros({ch}));
}

Tensor res_block(const ParamStore& p, const std::string& pre, const Tensor& x,
                 const Tensor& temb_act) {
    const int in_ch = static_cast<int>(x.dim(1));
    const Tensor& w1 = p.at(pre + "/conv1/w");
    const int out_ch = static_cast<int>(w1.dim(0));
    Tensor h = group_norm(x, norm_groups(in_ch), p.at(pre + "/gn1_g"), p.at(pre + "/gn1_b"));
    h = conv2d(silu(h), w1, p.at(pre + "/conv1/b"), 1, 1);
    Tensor tproj = linear(temb_act, p.at(pre + "/temb/w"), p.at(pre + "/temb/b"));
    h = add(h, reshape(tproj, {x.dim(0), out_ch, 1, 1}));
    h = group_norm(h, norm_groups(out_ch), p.at(pre + "/gn2_g"), p.at(pre + "/gn2_b"));
    h = conv2d(silu(h), p.at(pre + "/conv2/w"), p.at(pre + "/conv2/b"), 1, 1);
    Tensor skip = in_ch == out_ch
                      ? x
                      : conv2d(x, p.at(pre + "/skip/w"), p.at(pre + "/skip/b"), 1, 0);
    return add(h, skip);
}

CrossAttnBlockView make_block_view(const ParamStore& p, const AdapterParams* adapter,
                                   const std::string& pre, int site, int heads) {
    CrossAttnBlockView blk;
    blk.wq = p.at(pre + "/cross_wq");
    blk.wk = p.at(pre + "/cross_wk");
    blk.wv = p.at(pre + "/cross_wv");
    blk.wo = p.at(pre + "/cross_wo");
    blk.wo_b = p.at(pre + "/cross_wo_b");
    blk.heads = heads;
    blk.mode = adapter ? adapter->mode() : CrossAttnMode::text_only;
    if (blk.mode == CrossAttnMode::decoupled) {
        const std::string spre = "adapter/site" + std::to_string(site) + "/";
        const ParamStore& ap = adapter->weights().params;
        require(ap.contains(spre + "wk") && ap.contains(spre + "wv"),
                ErrCode::MissingImageStream,
                "decoupled mode without image-stream weights at site " + std::to_string(site));
        blk.wk_img = ap.at(spre + "wk");
        blk.wv_img = ap.at(spre + "wv");
    }
    return blk;
}

Tensor attn_block(const ParamStore& p, const AdapterParams* adapter, const std::string& pre,
                  int site, const Tensor& x, const CondBundle& cond, int heads) {
    const int64_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor tok = permute(reshape(x, {b, c, h * w}), {0, 2, 1});

    Tensor hn = layer_norm(tok, p.at(pre + "/ln1_g"), p.at(pre + "/ln1_b"));
    Tensor q = split_heads(matmul(hn, p.at(pre + "/self_wq")), heads);
    Tensor k = split_heads(matmul(hn, p.at(pre + "/self_wk")), heads);
    Tensor v = split_heads(matmul(hn, p.at(pre + "/self_wv")), heads);
    tok = add(tok, linear(merge_heads(attention(q, k, v)), p.at(pre + "/self_wo"),
                          p.at(pre + "/self_wo_b")));

    hn = layer_norm(tok, p.at(pre + "/ln2_g"), p.at(pre + "/ln2_b"));
    const CrossAttnBlockView blk = make_block_view(p, adapter, pre, site, heads);
    Tensor cr;
    switch (blk.mode) {
        case CrossAttnMode::text_only:
            cr = cross_attn_text(hn, cond.text_tokens, cond.text_mask, blk);
            break;
        case CrossAttnMode::decoupled:
            cr = cross_attn_decoupled(hn, cond.text_tokens, cond.text_mask, cond.image_tokens,
                                      cond.lambda_weight, blk);
            break;
        case CrossAttnMode::simple_concat:
            cr = cross_attn_simple_concat(hn, cond.text_tokens, cond.text_mask,
                                          cond.image_tokens, blk);
            break;
    }
    tok = add(tok, cr);

    hn = layer_norm(tok, p.at(pre + "/ln3_g"), p.at(pre + "/ln3_b"));
    tok = add(tok, linear(silu(linear(hn, p.at(pre + "/ff_w1"), p.at(pre + "/ff_b1"))),
                          p.at(pre + "/ff_w2"), p.at(pre + "/ff_b2")));
    return reshape(permute(tok, {0, 2, 1}), {b, c, h, w});
}

}  // namespace

int norm_groups(int channels) {
    int g = std::min(8, channels);
    while (channels % g != 0) {
        --g;
    }
    return g;
}

std::vector<int> UNetConfig::cross_site_channels() const {
    std::vector<int> out;
    for (int l = 0; l < levels(); ++l) {
        if (attn_at(l)) {
            out.push_back(channels(l));
        }
    }
    if (attn_at(levels() - 1)) {
        out.push_back(channels(levels() - 1));
    }
    for (int l = levels() - 1; l >= 0; --l) {
        if (attn_at(l)) {
            out.push_back(channels(l));
        }
    }
    return out;
}

std::string UNetConfig::to_json() const {
    nlohmann::json j;
    j["image_size"] = image_size;
    j["in_channels"] = in_channels;
    j["base_channels"] = base_channels;
    j["channel_mult"] = channel_mult;
    j["attn_resolutions"] = attn_resolutions;
    j["heads"] = heads;
    j["d_ctx"] = d_ctx;
    return j.dump();
}

UNetConfig UNetConfig::from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    UNetConfig cfg;
    cfg.image_size = j.at("image_size").get<int>();
    cfg.in_channels = j.at("in_channels").get<int>();
    cfg.base_channels = j.at("base_channels").get<int>();
    cfg.channel_mult = j.at("channel_mult").get<std::vector<int>>();
    cfg.attn_resolutions = j.at("attn_resolutions").get<std::vector<int>>();
    cfg.heads = j.at("heads").get<int>();
    cfg.d_ctx = j.at("d_ctx").get<int>();
    return cfg;
}

Tensor timestep_embed(int t, int dim) {
    require(dim % 2 == 0, ErrCode::OddDim, "timestep embedding dim must be even");
    const int half = dim / 2;
    std::vector<float> out(dim);
    for (int i = 0; i < half; ++i) {
        const double freq =
            half == 1 ? 1.0
                      : std::exp(-std::log(10000.0) * static_cast<double>(i) / (half - 1));
        out[i] = static_cast<float>(std::sin(t * freq));
        out[half + i] = static_cast<float>(std::cos(t * freq));
    }
    return Tensor::from_data({dim}, std::move(out));
}

Tensor timestep_embed_batch(const std::vector<int>& t, int dim) {
    require(dim % 2 == 0, ErrCode::OddDim, "timestep embedding dim must be even");
    std::vector<float> out;
    out.reserve(t.size() * dim);
    for (int ti : t) {
        Tensor e = timestep_embed(ti, dim);
        out.insert(out.end(), e.values().begin(), e.values().end());
    }
    return Tensor::from_data({static_cast<int64_t>(t.size()), dim}, std::move(out));
}

Tensor split_heads(const Tensor& x, int heads) {
    const int64_t b = x.dim(0), s = x.dim(1), d = x.dim(2);
    require(d % heads == 0, ErrCode::ShapeMismatch, "width not divisible by head count");
    return permute(reshape(x, {b, s, heads, d / heads}), {0, 2, 1, 3});
}

Tensor merge_heads(const Tensor& x) {
    const int64_t b = x.dim(0), h = x.dim(1), s = x.dim(2), dh = x.dim(3);
    return reshape(permute(x, {0, 2, 1, 3}), {b, s, h * dh});
}

Tensor cross_attn_text(const Tensor& z, const Tensor& c_t, const std::optional<Tensor>& mask,
                       const CrossAttnBlockView& blk) {
    Tensor q = split_heads(matmul(z, blk.wq), blk.heads);
    Tensor k = split_heads(matmul(c_t, blk.wk), blk.heads);
    Tensor v = split_heads(matmul(c_t, blk.wv), blk.heads);
    return linear(merge_heads(attention(q, k, v, mask)), blk.wo, blk.wo_b);
}

Tensor cross_attn_decoupled(const Tensor& z, const Tensor& c_t, const std::optional<Tensor>& mask,
                            const Tensor& c_i, float lambda_weight,
                            const CrossAttnBlockView& blk) {
    require(blk.wk_img.defined() && blk.wv_img.defined(), ErrCode::MissingImageStream,
            "decoupled cross-attention without W'_k/W'_v");
    Tensor q = split_heads(matmul(z, blk.wq), blk.heads);
    Tensor k = split_heads(matmul(c_t, blk.wk), blk.heads);
    Tensor v = split_heads(matmul(c_t, blk.wv), blk.heads);
    Tensor text_att = attention(q, k, v, mask);
    if (lambda_weight == 0.0f) {
        return linear(merge_heads(text_att), blk.wo, blk.wo_b);
    }
    require(c_i.defined(), ErrCode::MissingImageStream, "decoupled mode needs image tokens");
    Tensor ki = split_heads(matmul(c_i, blk.wk_img), blk.heads);
    Tensor vi = split_heads(matmul(c_i, blk.wv_img), blk.heads);
    Tensor img_att = attention(q, ki, vi);
    if (lambda_weight != 1.0f) {
        img_att = scale(img_att, lambda_weight);
    }
    return linear(merge_heads(add(text_att, img_att)), blk.wo, blk.wo_b);
}

Tensor cross_attn_simple_concat(const Tensor& z, const Tensor& c_t,
                                const std::optional<Tensor>& mask, const Tensor& c_i,
                                const CrossAttnBlockView& blk) {
    Tensor q = split_heads(matmul(z, blk.wq), blk.heads);
    Tensor ckv = c_t;
    std::optional<Tensor> full_mask = mask;
    if (c_i.defined() && c_i.dim(1) > 0) {
        ckv = concat({c_t, c_i}, 1);
        if (mask) {
            Tensor img_zeros = Tensor::zeros({c_i.dim(0), 1, 1, c_i.dim(1)});
            full_mask = concat({*mask, img_zeros}, 3);
        }
    }
    Tensor k = split_heads(matmul(ckv, blk.wk), blk.heads);
    Tensor v = split_heads(matmul(ckv, blk.wv), blk.heads);
    return linear(merge_heads(attention(q, k, v, full_mask)), blk.wo, blk.wo_b);
}

BaseModel BaseModel::init(const UNetConfig& cfg, uint64_t seed, int T, ScheduleKind kind) {
    BaseModel model;
    model.cfg = cfg;
    model.T = T;
    model.schedule_kind = kind;
    Rng rng(mix64(seed, 0x0e11e7));
    ParamStore& p = model.params;

    p.add("unet/temb/w1", Tensor::randn({cfg.sin_dim(), cfg.temb_dim()}, rng,
                                        1.0f / std::sqrt(static_cast<float>(cfg.sin_dim()))));
    p.add("unet/temb/b1", Tensor::zeros({cfg.temb_dim()}));
    p.add("unet/temb/w2", Tensor::randn({cfg.temb_dim(), cfg.temb_dim()}, rng,
                                        1.0f / std::sqrt(static_cast<float>(cfg.temb_dim()))));
    p.add("unet/temb/b2", Tensor::zeros({cfg.temb_dim()}));

    p.add("unet/conv_in/w",
          Tensor::randn({cfg.base_channels, cfg.in_channels, 3, 3}, rng,
                        1.0f / std::sqrt(static_cast<float>(cfg.in_channels * 9))));
    p.add("unet/conv_in/b", Tensor::zeros({cfg.base_channels}));

    int prev_ch = cfg.base_channels;
    for (int l = 0; l < cfg.levels(); ++l) {
        const int ch = cfg.channels(l);
        init_res_block(p, lvl("down", l) + "/res0", prev_ch, ch, cfg.temb_dim(), rng);
        if (cfg.attn_at(l)) {
            init_attn_block(p, lvl("down", l) + "/attn", ch, cfg.d_ctx, rng);
        }
        if (l + 1 < cfg.levels()) {
            p.add(lvl("down", l) + "/down/w",
                  Tensor::randn({ch, ch, 3, 3}, rng, 1.0f / std::sqrt(static_cast<float>(ch * 9))));
            p.add(lvl("down", l) + "/down/b", Tensor::zeros({ch}));
        }
        prev_ch = ch;
    }
    const int mid_ch = cfg.channels(cfg.levels() - 1);
    init_res_block(p, std::string(kU) + "mid/res0", mid_ch, mid_ch, cfg.temb_dim(), rng);
    if (cfg.attn_at(cfg.levels() - 1)) {
        init_attn_block(p, std::string(kU) + "mid/attn", mid_ch, cfg.d_ctx, rng);
    }
    init_res_block(p, std::string(kU) + "mid/res1", mid_ch, mid_ch, cfg.temb_dim(), rng);

    int cur_ch = mid_ch;
    for (int l = cfg.levels() - 1; l >= 0; --l) {
        const int ch = cfg.channels(l);
        init_res_block(p, lvl("up", l) + "/res0", cur_ch + ch, ch, cfg.temb_dim(), rng);
        if (cfg.attn_at(l)) {
            init_attn_block(p, lvl("up", l) + "/attn", ch, cfg.d_ctx, rng);
        }
        if (l > 0) {
            const int next_ch = cfg.channels(l - 1);
            p.add(lvl("up", l) + "/up/w", Tensor::randn({next_ch, ch, 3, 3}, rng,
                                                        1.0f / std::sqrt(static_cast<float>(ch * 9))));
            p.add(lvl("up", l) + "/up/b", Tensor::zeros({next_ch}));
            cur_ch = next_ch;
        } else {
            cur_ch = ch;
        }
    }
    p.add("unet/out/gn_g", Tensor::full({cfg.base_channels}, 1.0f));
    p.add("unet/out/gn_b", Tensor::zeros({cfg.base_channels}));
    // zero-init final conv: the fresh model predicts zero noise
    p.add("unet/out/w", Tensor::zeros({cfg.in_channels, cfg.base_channels, 3, 3}));
    p.add("unet/out/b", Tensor::zeros({cfg.in_channels}));
    return model;
}

BaseModel BaseModel::clone() const {
    BaseModel out;
    out.cfg = cfg;
    out.T = T;
    out.schedule_kind = schedule_kind;
    for (const auto& [name, tensor] : params.entries()) {
        out.params.add(name, tensor.detach_copy(), !params.is_frozen(name));
    }
    return out;
}

Tensor unet_forward(const BaseModel& base, const AdapterParams* adapter_sites, const Tensor& x,
                    const std::vector<int>& t, const CondBundle& cond,
                    const std::vector<Tensor>* control_residuals) {
    const UNetConfig& cfg = base.cfg;
    const Shape& xs = x.shape();
    require(xs.size() == 4 && xs[1] == cfg.in_channels && xs[2] == cfg.image_size &&
                xs[3] == cfg.image_size,
            ErrCode::ShapeMismatch, "unet_forward input shape " + shape_str(xs));
    require(static_cast<int64_t>(t.size()) == xs[0], ErrCode::ShapeMismatch,
            "one timestep per example required");
    for (int ti : t) {
        require(ti >= 1 && ti <= base.T, ErrCode::BadTimestep,
                "timestep out of range: " + std::to_string(ti));
    }
    const CrossAttnMode mode = adapter_sites ? adapter_sites->mode() : CrossAttnMode::text_only;
    require(cond.text_tokens.defined(), ErrCode::ModeConditionMismatch, "text tokens required");
    if (mode == CrossAttnMode::text_only) {
        require(!cond.image_tokens.defined(), ErrCode::ModeConditionMismatch,
                "image tokens supplied to a text-only model");
    } else {
        require(cond.image_tokens.defined(), ErrCode::ModeConditionMismatch,
                "image tokens required in mode with image stream");
    }
    if (control_residuals) {
        require(static_cast<int>(control_residuals->size()) == cfg.levels(),
                ErrCode::ShapeMismatch, "one control residual per level required");
    }

    const ParamStore& p = base.params;
    Tensor temb = timestep_embed_batch(t, cfg.sin_dim());
    temb = linear(temb, p.at("unet/temb/w1"), p.at("unet/temb/b1"));
    temb = linear(silu(temb), p.at("unet/temb/w2"), p.at("unet/temb/b2"));
    Tensor temb_act = silu(temb);

    int site = 0;
    Tensor h = conv2d(x, p.at("unet/conv_in/w"), p.at("unet/conv_in/b"), 1, 1);
    std::vector<Tensor> skips;
    for (int l = 0; l < cfg.levels(); ++l) {
        h = res_block(p, lvl("down", l) + "/res0", h, temb_act);
        if (cfg.attn_at(l)) {
            h = attn_block(p, adapter_sites, lvl("down", l) + "/attn", site++, h, cond,
                           cfg.heads);
        }
        if (control_residuals) {
            h = add(h, (*control_residuals)[l]);
        }
        skips.push_back(h);
        if (l + 1 < cfg.levels()) {
            h = conv2d(h, p.at(lvl("down", l) + "/down/w"), p.at(lvl("down", l) + "/down/b"), 2,
                       1);
        }
    }
    h = res_block(p, std::string(kU) + "mid/res0", h, temb_act);
    if (cfg.attn_at(cfg.levels() - 1)) {
        h = attn_block(p, adapter_sites, std::string(kU) + "mid/attn", site++, h, cond,
                       cfg.heads);
    }
    h = res_block(p, std::string(kU) + "mid/res1", h, temb_act);

    for (int l = cfg.levels() - 1; l >= 0; --l) {
        h = concat({h, skips[l]}, 1);
        h = res_block(p, lvl("up", l) + "/res0", h, temb_act);
        if (cfg.attn_at(l)) {
            h = attn_block(p, adapter_sites, lvl("up", l) + "/attn", site++, h, cond, cfg.heads);
        }
        if (l > 0) {
            h = upsample_nearest2(h);
            h = conv2d(h, p.at(lvl("up", l) + "/up/w"), p.at(lvl("up", l) + "/up/b"), 1, 1);
        }
    }
    h = group_norm(h, norm_groups(cfg.base_channels), p.at("unet/out/gn_g"),
                   p.at("unet/out/gn_b"));
    h = conv2d(silu(h), p.at("unet/out/w"), p.at("unet/out/b"), 1, 1);
    return h;
}

}  // namespace ipa
