#pragma once

#include "sampler.hpp"

namespace ipa {

// Cosine similarity of frozen-encoder global embeddings.
float clip_i(const Tensor& gen, const Tensor& prompt, const Encoders& enc);
// Cosine similarity between the image global embedding and the caption's
// pooled embedding in the shared contrastive space.
float clip_t(const Tensor& gen, const std::string& caption, const Encoders& enc);

struct EvalRow {
    std::string variant;
    float lambda_weight = 0.0f;
    float w = 0.0f;
    uint64_t seed = 0;
    float clip_i = 0.0f;
    float clip_t = 0.0f;
};

struct EvalAggregates {
    int64_t count = 0;
    double mean_clip_i = 0.0;
    double std_clip_i = 0.0;
    double mean_clip_t = 0.0;
    double std_clip_t = 0.0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    EvalAggregates aggregates() const;
    // Aggregates of the rows matching (variant, lambda); lambda < 0 matches all.
    EvalAggregates aggregates_for(const std::string& variant, float lambda_weight) const;
};

// CSV columns, in order: variant, lambda, w, seed, clip_i, clip_t.
// The JSON file mirrors the aggregates (overall and per variant/lambda group).
void emit_plotdata(const EvalReport& report, const std::string& csv_path,
                   const std::string& json_path);
EvalReport read_plotdata_csv(const std::string& csv_path);

struct PromptPair {
    std::string caption;
    Tensor image;
};

// Held-out (caption, image) pairs starting at kHeldOutBase + offset. With
// conflicting = true the caption is taken from a different scene than the
// image.
std::vector<PromptPair> held_out_prompts(uint64_t data_seed, uint64_t offset, int count,
                                         bool conflicting);

struct SweepSpec {
    std::vector<float> lambdas = {0.0f, 0.5f, 1.0f};
    int n_per_point = 4;
    int steps = 50;
    float w = 7.5f;
    uint64_t seed = 0;
};

// Mean clip_i / clip_t per lambda over the prompt set; the same per-sample
// seeds are reused across every lambda arm.
EvalReport lambda_sweep(const std::vector<PromptPair>& prompts, const ComposedModel& model,
                        const Encoders& enc, const SweepSpec& spec);

struct AblateSpec {
    int steps = 50;
    float w = 7.5f;
    float lambda_weight = 1.0f;
    uint64_t seed = 0;
};

struct AblateResult {
    EvalReport report;  // rows for both arms
    int wins = 0;       // first adapter strictly better on clip_i
    int losses = 0;
    int ties = 0;
    double mean_clip_i_a = 0.0;
    double mean_clip_i_b = 0.0;
    double p_value = 1.0;  // one-sided paired sign test
};

// Paired per-prompt comparison with shared seeds. BudgetMismatch unless both
// adapters were trained for the same steps and batch size.
AblateResult ablate(std::shared_ptr<BaseModel> base, const AdapterWeights& adapter_a,
                    const AdapterWeights& adapter_b, const std::vector<PromptPair>& prompts,
                    const Encoders& enc, const AblateSpec& spec);

// One-sided exact binomial tail P(X >= wins) with X ~ Binomial(wins+losses, 1/2).
double paired_sign_test_p(int wins, int losses);

}  // namespace ipa
