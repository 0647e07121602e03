#include "metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "threadpool.hpp"

namespace ipa {

namespace {

float cosine(const Tensor& a, const Tensor& b) {
    double dot = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        dot += static_cast<double>(a.data()[i]) * b.data()[i];
    }
    return static_cast<float>(dot);
}

void accumulate(EvalAggregates& agg, const std::vector<EvalRow>& rows,
                const std::string& variant, float lambda_weight) {
    double sum_i = 0.0, sum_t = 0.0;
    std::vector<const EvalRow*> sel;
    for (const EvalRow& r : rows) {
        if (!variant.empty() && r.variant != variant) {
            continue;
        }
        if (lambda_weight >= 0.0f && r.lambda_weight != lambda_weight) {
            continue;
        }
        sel.push_back(&r);
        sum_i += r.clip_i;
        sum_t += r.clip_t;
    }
    agg.count = static_cast<int64_t>(sel.size());
    if (sel.empty()) {
        return;
    }
    agg.mean_clip_i = sum_i / agg.count;
    agg.mean_clip_t = sum_t / agg.count;
    double var_i = 0.0, var_t = 0.0;
    for (const EvalRow* r : sel) {
        var_i += (r->clip_i - agg.mean_clip_i) * (r->clip_i - agg.mean_clip_i);
        var_t += (r->clip_t - agg.mean_clip_t) * (r->clip_t - agg.mean_clip_t);
    }
    agg.std_clip_i = std::sqrt(var_i / agg.count);
    agg.std_clip_t = std::sqrt(var_t / agg.count);
}

std::string fmt_float(float v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
    return buf;
}

}  // namespace

float clip_i(const Tensor& gen, const Tensor& prompt, const Encoders& enc) {
    return cosine(enc.image_encode(gen).global, enc.image_encode(prompt).global);
}

float clip_t(const Tensor& gen, const std::string& caption, const Encoders& enc) {
    const Tensor img = enc.image_encode(gen).global;
    const Tensor txt = enc.text_encode(tokenize(caption, Vocabulary::standard())).pooled;
    return cosine(img, txt);
}

EvalAggregates EvalReport::aggregates() const {
    EvalAggregates agg;
    accumulate(agg, rows, "", -1.0f);
    return agg;
}

EvalAggregates EvalReport::aggregates_for(const std::string& variant, float lambda_weight) const {
    EvalAggregates agg;
    accumulate(agg, rows, variant, lambda_weight);
    return agg;
}

void emit_plotdata(const EvalReport& report, const std::string& csv_path,
                   const std::string& json_path) {
    {
        std::ofstream os(csv_path, std::ios::trunc);
        require(os.good(), ErrCode::IoError, "cannot write " + csv_path);
        os << "variant,lambda,w,seed,clip_i,clip_t\n";
        for (const EvalRow& r : report.rows) {
            os << r.variant << ',' << fmt_float(r.lambda_weight) << ',' << fmt_float(r.w) << ','
               << r.seed << ',' << fmt_float(r.clip_i) << ',' << fmt_float(r.clip_t) << '\n';
        }
        require(os.good(), ErrCode::IoError, "short write to " + csv_path);
    }
    nlohmann::json j;
    const EvalAggregates overall = report.aggregates();
    j["count"] = overall.count;
    j["mean_clip_i"] = overall.mean_clip_i;
    j["std_clip_i"] = overall.std_clip_i;
    j["mean_clip_t"] = overall.mean_clip_t;
    j["std_clip_t"] = overall.std_clip_t;
    // per (variant, lambda) groups in row order
    nlohmann::json groups = nlohmann::json::array();
    std::vector<std::pair<std::string, float>> seen;
    for (const EvalRow& r : report.rows) {
        const auto key = std::make_pair(r.variant, r.lambda_weight);
        bool dup = false;
        for (const auto& s : seen) {
            if (s == key) {
                dup = true;
                break;
            }
        }
        if (dup) {
            continue;
        }
        seen.push_back(key);
        const EvalAggregates agg = report.aggregates_for(r.variant, r.lambda_weight);
        nlohmann::json g;
        g["variant"] = r.variant;
        g["lambda"] = r.lambda_weight;
        g["count"] = agg.count;
        g["mean_clip_i"] = agg.mean_clip_i;
        g["std_clip_i"] = agg.std_clip_i;
        g["mean_clip_t"] = agg.mean_clip_t;
        g["std_clip_t"] = agg.std_clip_t;
        groups.push_back(g);
    }
    j["groups"] = groups;
    std::ofstream os(json_path, std::ios::trunc);
    require(os.good(), ErrCode::IoError, "cannot write " + json_path);
    os << j.dump(2) << '\n';
    require(os.good(), ErrCode::IoError, "short write to " + json_path);
}

EvalReport read_plotdata_csv(const std::string& csv_path) {
    std::ifstream is(csv_path);
    require(is.good(), ErrCode::IoError, "cannot read " + csv_path);
    std::string line;
    require(static_cast<bool>(std::getline(is, line)), ErrCode::IoError, "empty csv");
    require(line == "variant,lambda,w,seed,clip_i,clip_t", ErrCode::IoError,
            "unexpected csv header: " + line);
    EvalReport report;
    while (std::getline(is, line)) {
        if (line.empty()) {
            continue;
        }
        std::istringstream ls(line);
        EvalRow row;
        std::string field;
        std::getline(ls, row.variant, ',');
        std::getline(ls, field, ',');
        row.lambda_weight = std::strtof(field.c_str(), nullptr);
        std::getline(ls, field, ',');
        row.w = std::strtof(field.c_str(), nullptr);
        std::getline(ls, field, ',');
        row.seed = std::strtoull(field.c_str(), nullptr, 10);
        std::getline(ls, field, ',');
        row.clip_i = std::strtof(field.c_str(), nullptr);
        std::getline(ls, field, ',');
        row.clip_t = std::strtof(field.c_str(), nullptr);
        report.rows.push_back(row);
    }
    return report;
}

std::vector<PromptPair> held_out_prompts(uint64_t data_seed, uint64_t offset, int count,
                                         bool conflicting) {
    std::vector<PromptPair> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        const uint64_t idx = kHeldOutBase + offset + static_cast<uint64_t>(i);
        Example img_ex = gen_example(data_seed, idx);
        if (!conflicting) {
            out.push_back(PromptPair{img_ex.caption, img_ex.image});
            continue;
        }
        // caption from a disjoint index range so text and image disagree
        Example cap_ex = gen_example(data_seed, idx + (1ull << 20));
        out.push_back(PromptPair{cap_ex.caption, img_ex.image});
    }
    return out;
}

EvalReport lambda_sweep(const std::vector<PromptPair>& prompts, const ComposedModel& model,
                        const Encoders& enc, const SweepSpec& spec) {
    require(model.adapter.has_value() && model.adapter->variant != AdapterVariant::simple,
            ErrCode::InvalidRequest, "lambda sweep needs a decoupled adapter");
    EvalReport report;
    const std::string variant = adapter_variant_name(model.adapter->variant);
    const int n = static_cast<int>(prompts.size());
    for (float lambda_weight : spec.lambdas) {
        std::vector<EvalRow> rows(n * spec.n_per_point);
        parallel_for(n * spec.n_per_point, [&](int idx) {
            const int p = idx / spec.n_per_point;
            SampleRequest req;
            req.caption = prompts[p].caption;
            req.prompt_image = prompts[p].image;
            req.lambda_weight = lambda_weight;
            req.w = spec.w;
            req.steps = spec.steps;
            req.seed = mix64(spec.seed, static_cast<uint64_t>(idx));
            Tensor gen = sample(req, model, enc);
            EvalRow row;
            row.variant = variant;
            row.lambda_weight = lambda_weight;
            row.w = spec.w;
            row.seed = req.seed;
            row.clip_i = clip_i(gen, prompts[p].image, enc);
            row.clip_t = clip_t(gen, prompts[p].caption, enc);
            rows[idx] = row;
        });
        report.rows.insert(report.rows.end(), rows.begin(), rows.end());
    }
    return report;
}

AblateResult ablate(std::shared_ptr<BaseModel> base, const AdapterWeights& adapter_a,
                    const AdapterWeights& adapter_b, const std::vector<PromptPair>& prompts,
                    const Encoders& enc, const AblateSpec& spec) {
    require(adapter_a.trained_steps == adapter_b.trained_steps &&
                adapter_a.trained_batch == adapter_b.trained_batch,
            ErrCode::BudgetMismatch,
            "adapters were trained with different budgets; comparison refused");
    AblateResult result;
    const int n = static_cast<int>(prompts.size());
    const ComposedModel model_a = apply_adapter(base, adapter_a);
    const ComposedModel model_b = apply_adapter(base, adapter_b);
    std::vector<EvalRow> rows_a(n), rows_b(n);
    parallel_for(n, [&](int i) {
        SampleRequest req;
        req.caption = prompts[i].caption;
        req.prompt_image = prompts[i].image;
        req.lambda_weight = spec.lambda_weight;
        req.w = spec.w;
        req.steps = spec.steps;
        req.seed = mix64(spec.seed, static_cast<uint64_t>(i));
        Tensor gen_a = sample(req, model_a, enc);
        Tensor gen_b = sample(req, model_b, enc);
        EvalRow row;
        row.w = spec.w;
        row.lambda_weight = spec.lambda_weight;
        row.seed = req.seed;
        row.variant = adapter_variant_name(adapter_a.variant);
        row.clip_i = clip_i(gen_a, prompts[i].image, enc);
        row.clip_t = clip_t(gen_a, prompts[i].caption, enc);
        rows_a[i] = row;
        row.variant = adapter_variant_name(adapter_b.variant);
        row.clip_i = clip_i(gen_b, prompts[i].image, enc);
        row.clip_t = clip_t(gen_b, prompts[i].caption, enc);
        rows_b[i] = row;
    });
    double sum_a = 0.0, sum_b = 0.0;
    for (int i = 0; i < n; ++i) {
        sum_a += rows_a[i].clip_i;
        sum_b += rows_b[i].clip_i;
        if (rows_a[i].clip_i > rows_b[i].clip_i) {
            ++result.wins;
        } else if (rows_a[i].clip_i < rows_b[i].clip_i) {
            ++result.losses;
        } else {
            ++result.ties;
        }
    }
    result.mean_clip_i_a = n ? sum_a / n : 0.0;
    result.mean_clip_i_b = n ? sum_b / n : 0.0;
    result.p_value = paired_sign_test_p(result.wins, result.losses);
    result.report.rows.insert(result.report.rows.end(), rows_a.begin(), rows_a.end());
    result.report.rows.insert(result.report.rows.end(), rows_b.begin(), rows_b.end());
    return result;
}

double paired_sign_test_p(int wins, int losses) {
    const int n = wins + losses;
    if (n == 0) {
        return 1.0;
    }
    // sum_{k=wins}^{n} C(n,k) / 2^n, in log space
    double p = 0.0;
    for (int k = wins; k <= n; ++k) {
        const double log_c = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) -
                             std::lgamma(n - k + 1.0) - n * std::log(2.0);
        p += std::exp(log_c);
    }
    return std::min(1.0, p);
}

}  // namespace ipa
