#pragma once

#include <array>

#include "dataset.hpp"
#include "ops.hpp"
#include "param_store.hpp"
#include "vocab.hpp"

namespace ipa {

struct EncoderConfig {
    int d_ctx = 64;
    int text_blocks = 2;
    int text_heads = 4;
    int max_len = Vocabulary::kMaxLen;
    std::array<int, 4> img_channels = {32, 64, 64, 64};
    float temperature = 0.07f;
};

struct TextFeatures {
    Tensor tokens_out;           // [max_len, d_ctx], pad rows zeroed
    Tensor pooled;               // [d_ctx], unit norm
    std::vector<bool> pad_mask;  // true at PAD slots
};

struct ImageFeatures {
    Tensor grid;    // [16, d_ctx]
    Tensor global;  // [d_ctx], unit norm
};

// Jointly trained text/image towers standing in for the frozen contrastive
// encoders. After train_contrastive they are frozen and every public
// single-example op requires the frozen state.
struct Encoders {
    EncoderConfig cfg;
    ParamStore params;
    bool frozen = false;

    static Encoders init(uint64_t seed, EncoderConfig cfg = {});

    TextFeatures text_encode(const std::vector<int>& ids) const;
    ImageFeatures image_encode(const Tensor& image) const;

    struct TextBatch {
        Tensor tokens;     // [B, max_len, d_ctx], pad rows zeroed
        Tensor pooled;     // [B, d_ctx]
        Tensor mask_bias;  // [B,1,1,max_len], 0 real / -1e9 pad
    };
    struct ImageBatch {
        Tensor grid;    // [B, 16, d_ctx]
        Tensor global;  // [B, d_ctx]
    };

    // Batched forwards used by training loops; no frozen check.
    TextBatch text_forward(const std::vector<std::vector<int>>& ids) const;
    ImageBatch image_forward(const Tensor& images) const;
};

// Symmetric InfoNCE over the batch similarity matrix of unit embeddings.
Tensor contrastive_loss(const Tensor& img_embed, const Tensor& txt_embed, float temperature);

struct ContrastiveTrainConfig {
    uint64_t seed = 1;
    int steps = 1500;
    int batch = 32;
    float lr = 1e-3f;
    float weight_decay = 1e-4f;
    float temperature = 0.07f;
    int eval_pairs = 10000;
    int eval_batch = 64;
    float accuracy_gate = 0.9f;
};

struct ContrastiveTrainResult {
    Encoders encoders;  // frozen
    std::vector<float> loss_history;
    double retrieval_accuracy = 0.0;
};

ContrastiveTrainResult train_contrastive(const ContrastiveTrainConfig& cfg);

// Top-1 image->text retrieval accuracy over held-out pairs grouped in
// batches. Exposed so acceptance checks can rerun it on a loaded checkpoint.
double retrieval_accuracy(const Encoders& enc, int pairs, int batch, uint64_t data_seed);

}  // namespace ipa
