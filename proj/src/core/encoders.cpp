#include "encoders.hpp"

#include <cmath>

namespace ipa {

namespace {

constexpr float kMaskNeg = -1e9f;

Tensor gaussian(Shape shape, Rng& rng, float stddev) { return Tensor::randn(shape, rng, stddev); }

void init_text_tower(ParamStore& p, const EncoderConfig& cfg, Rng& rng) {
    const int d = cfg.d_ctx;
    const float w_std = 1.0f / std::sqrt(static_cast<float>(d));
    p.add("text/tok_emb", gaussian({Vocabulary::standard().size(), d}, rng, 0.02f));
    p.add("text/pos_emb", gaussian({cfg.max_len, d}, rng, 0.02f));
    for (int b = 0; b < cfg.text_blocks; ++b) {
        const std::string pre = "text/b" + std::to_string(b) + "/";
        p.add(pre + "ln1_g", Tensor::full({d}, 1.0f));
        p.add(pre + "ln1_b", Tensor::zeros({d}));
        p.add(pre + "wq", gaussian({d, d}, rng, w_std));
        p.add(pre + "wk", gaussian({d, d}, rng, w_std));
        p.add(pre + "wv", gaussian({d, d}, rng, w_std));
        p.add(pre + "wo", gaussian({d, d}, rng, w_std));
        p.add(pre + "wo_b", Tensor::zeros({d}));
        p.add(pre + "ln2_g", Tensor::full({d}, 1.0f));
        p.add(pre + "ln2_b", Tensor::zeros({d}));
        p.add(pre + "ff_w1", gaussian({d, 2 * d}, rng, w_std));
        p.add(pre + "ff_b1", Tensor::zeros({2 * d}));
        p.add(pre + "ff_w2", gaussian({2 * d, d}, rng, 1.0f / std::sqrt(2.0f * d)));
        p.add(pre + "ff_b2", Tensor::zeros({d}));
    }
    p.add("text/ln_f_g", Tensor::full({d}, 1.0f));
    p.add("text/ln_f_b", Tensor::zeros({d}));
}

void init_image_tower(ParamStore& p, const EncoderConfig& cfg, Rng& rng) {
    int in_ch = 3;
    for (int i = 0; i < 4; ++i) {
        const int out_ch = cfg.img_channels[i];
        const std::string pre = "img/c" + std::to_string(i) + "/";
        const float std_w = 1.0f / std::sqrt(static_cast<float>(in_ch * 9));
        p.add(pre + "w", gaussian({out_ch, in_ch, 3, 3}, rng, std_w));
        p.add(pre + "b", Tensor::zeros({out_ch}));
        p.add(pre + "gn_g", Tensor::full({out_ch}, 1.0f));
        p.add(pre + "gn_b", Tensor::zeros({out_ch}));
        in_ch = out_ch;
    }
    const int d = cfg.d_ctx;
    p.add("img/head_w", gaussian({cfg.img_channels[3], d}, rng, 1.0f / std::sqrt(64.0f)));
    p.add("img/head_b", Tensor::zeros({d}));
}

Tensor split_heads(const Tensor& x, int heads) {
    const int64_t b = x.dim(0), s = x.dim(1), d = x.dim(2);
    return permute(reshape(x, {b, s, heads, d / heads}), {0, 2, 1, 3});
}

Tensor merge_heads(const Tensor& x) {
    const int64_t b = x.dim(0), h = x.dim(1), s = x.dim(2), dh = x.dim(3);
    return reshape(permute(x, {0, 2, 1, 3}), {b, s, h * dh});
}

}  // namespace

Encoders Encoders::init(uint64_t seed, EncoderConfig cfg) {
    Encoders enc;
    enc.cfg = cfg;
    Rng rng(mix64(seed, 0xe2c0de));
    init_text_tower(enc.params, cfg, rng);
    init_image_tower(enc.params, cfg, rng);
    return enc;
}

Encoders::TextBatch Encoders::text_forward(const std::vector<std::vector<int>>& ids) const {
    const int64_t batch = static_cast<int64_t>(ids.size());
    const int64_t len = cfg.max_len;
    const int64_t d = cfg.d_ctx;
    std::vector<int> flat;
    flat.reserve(batch * len);
    std::vector<float> bias(batch * len);
    std::vector<float> keep(batch * len);
    std::vector<int> eos_rows(batch, 0);
    for (int64_t b = 0; b < batch; ++b) {
        require(static_cast<int64_t>(ids[b].size()) == len, ErrCode::ShapeMismatch,
                "token list must have max_len entries");
        for (int64_t i = 0; i < len; ++i) {
            const int id = ids[b][i];
            flat.push_back(id);
            const bool pad = id == Vocabulary::kPad;
            bias[b * len + i] = pad ? kMaskNeg : 0.0f;
            keep[b * len + i] = pad ? 0.0f : 1.0f;
            if (id == Vocabulary::kEos) {
                eos_rows[b] = static_cast<int>(b * len + i);
            }
        }
    }
    Tensor mask_bias = Tensor::from_data({batch, 1, 1, len}, std::move(bias));
    Tensor keep_mask = Tensor::from_data({batch, len, 1}, std::move(keep));

    Tensor x = reshape(embedding(params.at("text/tok_emb"), flat), {batch, len, d});
    x = add(x, params.at("text/pos_emb"));
    for (int blk = 0; blk < cfg.text_blocks; ++blk) {
        const std::string pre = "text/b" + std::to_string(blk) + "/";
        Tensor h = layer_norm(x, params.at(pre + "ln1_g"), params.at(pre + "ln1_b"));
        Tensor q = split_heads(matmul(h, params.at(pre + "wq")), cfg.text_heads);
        Tensor k = split_heads(matmul(h, params.at(pre + "wk")), cfg.text_heads);
        Tensor v = split_heads(matmul(h, params.at(pre + "wv")), cfg.text_heads);
        Tensor att = merge_heads(attention(q, k, v, mask_bias));
        x = add(x, linear(att, params.at(pre + "wo"), params.at(pre + "wo_b")));
        Tensor f = layer_norm(x, params.at(pre + "ln2_g"), params.at(pre + "ln2_b"));
        f = linear(silu(linear(f, params.at(pre + "ff_w1"), params.at(pre + "ff_b1"))),
                   params.at(pre + "ff_w2"), params.at(pre + "ff_b2"));
        x = add(x, f);
    }
    x = layer_norm(x, params.at("text/ln_f_g"), params.at("text/ln_f_b"));
    x = mul(x, keep_mask);

    Tensor pooled = embedding(reshape(x, {batch * len, d}), eos_rows);
    pooled = l2_normalize_rows(pooled);
    return TextBatch{x, pooled, mask_bias};
}

Encoders::ImageBatch Encoders::image_forward(const Tensor& images) const {
    const Shape& s = images.shape();
    require(s.size() == 4 && s[1] == 3 && s[2] == kImageSize && s[3] == kImageSize,
            ErrCode::ShapeMismatch, "image_forward expects [B,3,32,32]");
    for (float v : images.values()) {
        require(v >= -1.0f && v <= 1.0f, ErrCode::BadRange, "pixels must lie in [-1,1]");
    }
    Tensor h = images;
    const int strides[4] = {1, 2, 2, 2};
    for (int i = 0; i < 4; ++i) {
        const std::string pre = "img/c" + std::to_string(i) + "/";
        h = conv2d(h, params.at(pre + "w"), params.at(pre + "b"), strides[i], 1);
        const int groups = std::min<int>(8, static_cast<int>(h.dim(1)));
        h = group_norm(h, groups, params.at(pre + "gn_g"), params.at(pre + "gn_b"));
        h = silu(h);
    }
    const int64_t batch = h.dim(0);
    const int64_t ch = h.dim(1);
    Tensor grid = permute(reshape(h, {batch, ch, 16}), {0, 2, 1});  // [B,16,ch]
    Tensor pool = reshape(matmul(Tensor::full({1, 16}, 1.0f / 16.0f), grid), {batch, ch});
    Tensor global = l2_normalize_rows(linear(pool, params.at("img/head_w"),
                                             params.at("img/head_b")));
    return ImageBatch{grid, global};
}

TextFeatures Encoders::text_encode(const std::vector<int>& ids) const {
    require(frozen, ErrCode::NotFrozen, "text_encode requires frozen encoders");
    NoGradGuard ng;
    TextBatch batch = text_forward({ids});
    TextFeatures out;
    out.tokens_out = reshape(batch.tokens, {cfg.max_len, cfg.d_ctx});
    out.pooled = reshape(batch.pooled, {cfg.d_ctx});
    out.pad_mask.resize(ids.size());
    for (size_t i = 0; i < ids.size(); ++i) {
        out.pad_mask[i] = ids[i] == Vocabulary::kPad;
    }
    return out;
}

ImageFeatures Encoders::image_encode(const Tensor& image) const {
    require(frozen, ErrCode::NotFrozen, "image_encode requires frozen encoders");
    require(image.shape() == Shape({3, kImageSize, kImageSize}), ErrCode::ShapeMismatch,
            "image_encode expects [3,32,32]");
    NoGradGuard ng;
    Tensor batched = reshape(image, {1, 3, kImageSize, kImageSize});
    ImageBatch batch = image_forward(batched);
    return ImageFeatures{reshape(batch.grid, {16, cfg.d_ctx}),
                         reshape(batch.global, {cfg.d_ctx})};
}

Tensor contrastive_loss(const Tensor& img_embed, const Tensor& txt_embed, float temperature) {
    require(img_embed.shape().size() == 2 && img_embed.shape() == txt_embed.shape(),
            ErrCode::ShapeMismatch, "contrastive_loss expects matching [B,d] embeddings");
    const int64_t batch = img_embed.dim(0);
    require(batch >= 2, ErrCode::BatchTooSmall, "contrastive loss needs batch >= 2");
    require(temperature > 0.0f, ErrCode::BadArg, "temperature must be positive");
    Tensor logits = scale(matmul(img_embed, permute(txt_embed, {1, 0})), 1.0f / temperature);
    Tensor li2t = log_softmax_rows(logits);
    Tensor lt2i = log_softmax_rows(permute(logits, {1, 0}));
    std::vector<float> eye(batch * batch, 0.0f);
    for (int64_t i = 0; i < batch; ++i) {
        eye[i * batch + i] = 1.0f;
    }
    Tensor diag = Tensor::from_data({batch, batch}, std::move(eye));
    Tensor total = add(sum_all(mul(li2t, diag)), sum_all(mul(lt2i, diag)));
    return scale(total, -0.5f / static_cast<float>(batch));
}

namespace {

struct PairBatch {
    Tensor images;
    std::vector<std::vector<int>> ids;
};

PairBatch gather_pairs(uint64_t seed, uint64_t index0, int count) {
    const Vocabulary& vocab = Vocabulary::standard();
    std::vector<float> images;
    images.reserve(static_cast<size_t>(count) * 3 * kImageSize * kImageSize);
    PairBatch out;
    for (int i = 0; i < count; ++i) {
        Example ex = gen_example(seed, index0 + static_cast<uint64_t>(i));
        images.insert(images.end(), ex.image.values().begin(), ex.image.values().end());
        out.ids.push_back(tokenize(ex.caption, vocab));
    }
    out.images = Tensor::from_data({count, 3, kImageSize, kImageSize}, std::move(images));
    return out;
}

}  // namespace

double retrieval_accuracy(const Encoders& enc, int pairs, int batch, uint64_t data_seed) {
    NoGradGuard ng;
    int correct = 0;
    int total = 0;
    for (int start = 0; start + batch <= pairs; start += batch) {
        PairBatch pb = gather_pairs(data_seed, kHeldOutBase + static_cast<uint64_t>(start), batch);
        Tensor img = enc.image_forward(pb.images).global;
        Tensor txt = enc.text_forward(pb.ids).pooled;
        const int64_t d = img.dim(1);
        for (int i = 0; i < batch; ++i) {
            const float* iv = img.data() + i * d;
            int best = -1;
            float best_sim = -2.0f;
            for (int j = 0; j < batch; ++j) {
                const float* tv = txt.data() + j * d;
                float sim = 0.0f;
                for (int64_t k = 0; k < d; ++k) {
                    sim += iv[k] * tv[k];
                }
                if (sim > best_sim) {
                    best_sim = sim;
                    best = j;
                }
            }
            correct += best == i ? 1 : 0;
            ++total;
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(correct) / total;
}

ContrastiveTrainResult train_contrastive(const ContrastiveTrainConfig& cfg) {
    ContrastiveTrainResult result;
    result.encoders = Encoders::init(mix64(cfg.seed, 1));
    result.encoders.cfg.temperature = cfg.temperature;
    Encoders& enc = result.encoders;
    OptimState opt = OptimState::create(enc.params, cfg.lr, cfg.weight_decay);
    const uint64_t data_seed = mix64(cfg.seed, 2);
    for (int step = 0; step < cfg.steps; ++step) {
        PairBatch pb = gather_pairs(data_seed, static_cast<uint64_t>(step) * cfg.batch,
                                    cfg.batch);
        Tensor img = enc.image_forward(pb.images).global;
        Tensor txt = enc.text_forward(pb.ids).pooled;
        Tensor loss = contrastive_loss(img, txt, cfg.temperature);
        result.loss_history.push_back(loss.values()[0]);
        backward_params(loss, enc.params);
        adamw_step(enc.params, opt);
    }
    enc.params.freeze_all();
    enc.frozen = true;
    result.retrieval_accuracy =
        retrieval_accuracy(enc, cfg.eval_pairs, cfg.eval_batch, data_seed);
    if (cfg.steps > 0) {
        require(result.retrieval_accuracy >= cfg.accuracy_gate, ErrCode::DidNotConverge,
                "held-out retrieval accuracy " + std::to_string(result.retrieval_accuracy) +
                    " below gate " + std::to_string(cfg.accuracy_gate));
    }
    return result;
}

}  // namespace ipa
