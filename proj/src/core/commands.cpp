#include "commands.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "manifest.hpp"
#include "metrics.hpp"
#include "model_io.hpp"
#include "ppm.hpp"
#include "threadpool.hpp"
#include "trainer.hpp"

namespace ipa {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json parse_config(const std::string& config_json) {
    if (config_json.empty()) {
        return json::object();
    }
    json j = json::parse(config_json, nullptr, false);
    require(!j.is_discarded() && j.is_object(), ErrCode::BadArg, "config must be a JSON object");
    return j;
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key) || j.at(key).is_null()) {
        return fallback;
    }
    return j.at(key).get<T>();
}

std::string need_path(const json& j, const char* key) {
    require(j.contains(key) && j.at(key).is_string(), ErrCode::BadArg,
            std::string("config requires \"") + key + "\" (checkpoint path)");
    const std::string path = j.at(key).get<std::string>();
    require(fs::exists(path), ErrCode::IoError, std::string(key) + " not found: " + path);
    return path;
}

UNetConfig unet_from_config(const json& j) {
    UNetConfig cfg;
    if (!j.contains("unet")) {
        return cfg;
    }
    const json& u = j.at("unet");
    cfg.image_size = get_or(u, "image_size", cfg.image_size);
    cfg.in_channels = get_or(u, "in_channels", cfg.in_channels);
    cfg.base_channels = get_or(u, "base_channels", cfg.base_channels);
    cfg.channel_mult = get_or(u, "channel_mult", cfg.channel_mult);
    cfg.attn_resolutions = get_or(u, "attn_resolutions", cfg.attn_resolutions);
    cfg.heads = get_or(u, "heads", cfg.heads);
    cfg.d_ctx = get_or(u, "d_ctx", cfg.d_ctx);
    return cfg;
}

json unet_to_json(const UNetConfig& cfg) { return json::parse(cfg.to_json()); }

struct RunContext {
    std::string out_dir;
    RunManifest manifest;

    std::string out_path(const std::string& name) const { return out_dir + "/" + name; }
    void note_input(const std::string& path) {
        manifest.input_hashes[path] = file_sha256(path);
    }
    void note_output(const std::string& name) { manifest.outputs.push_back(name); }
};

void write_train_log(RunContext& ctx, const std::string& stem,
                     const std::vector<float>& losses, const json& extra) {
    json j = extra;
    j["losses"] = losses;
    const std::string name = stem + ".log.json";
    std::ofstream os(ctx.out_path(name), std::ios::trunc);
    require(os.good(), ErrCode::IoError, "cannot write " + name);
    os << j.dump(2) << '\n';
    ctx.note_output(name);
}

TrainConfig train_config_from(const json& j, float default_lr, int default_steps,
                              int default_batch, float default_p_text) {
    TrainConfig cfg;
    cfg.seed = get_or<uint64_t>(j, "seed", 0);
    cfg.steps = get_or(j, "steps", default_steps);
    cfg.batch = get_or(j, "batch", default_batch);
    cfg.lr = get_or(j, "lr", default_lr);
    cfg.weight_decay = get_or(j, "weight_decay", 0.01f);
    cfg.p_drop_text = get_or(j, "p_drop_text", default_p_text);
    cfg.p_drop_image = get_or(j, "p_drop_image", 0.05f);
    cfg.p_drop_both = get_or(j, "p_drop_both", 0.05f);
    cfg.clip_t_gate = get_or(j, "clip_t_gate", 0.30f);
    cfg.gate_samples = get_or(j, "gate_samples", 32);
    cfg.gate_ddim_steps = get_or(j, "gate_ddim_steps", 20);
    cfg.gate_w = get_or(j, "gate_w", 7.5f);
    return cfg;
}

json train_config_echo(const TrainConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["steps"] = cfg.steps;
    j["batch"] = cfg.batch;
    j["lr"] = cfg.lr;
    j["weight_decay"] = cfg.weight_decay;
    j["p_drop_text"] = cfg.p_drop_text;
    j["p_drop_image"] = cfg.p_drop_image;
    j["p_drop_both"] = cfg.p_drop_both;
    j["clip_t_gate"] = cfg.clip_t_gate;
    j["gate_samples"] = cfg.gate_samples;
    j["gate_ddim_steps"] = cfg.gate_ddim_steps;
    j["gate_w"] = cfg.gate_w;
    return j;
}

json cmd_train_clip(const json& in, RunContext& ctx) {
    ContrastiveTrainConfig cfg;
    cfg.seed = get_or<uint64_t>(in, "seed", 1);
    cfg.steps = get_or(in, "steps", 1500);
    cfg.batch = get_or(in, "batch", 32);
    cfg.lr = get_or(in, "lr", 1e-3f);
    cfg.weight_decay = get_or(in, "weight_decay", 1e-4f);
    cfg.temperature = get_or(in, "temperature", 0.07f);
    cfg.eval_pairs = get_or(in, "eval_pairs", 10000);
    cfg.eval_batch = get_or(in, "eval_batch", 64);
    cfg.accuracy_gate = get_or(in, "accuracy_gate", 0.9f);
    const std::string out_name = get_or<std::string>(in, "out_name", "encoders.tdc");

    ContrastiveTrainResult result = train_contrastive(cfg);
    save_encoders(result.encoders, ctx.out_path(out_name), cfg.seed);
    ctx.note_output(out_name);
    json log;
    log["retrieval_accuracy"] = result.retrieval_accuracy;
    write_train_log(ctx, fs::path(out_name).stem().string(), result.loss_history, log);

    json echo;
    echo["seed"] = cfg.seed;
    echo["steps"] = cfg.steps;
    echo["batch"] = cfg.batch;
    echo["lr"] = cfg.lr;
    echo["weight_decay"] = cfg.weight_decay;
    echo["temperature"] = cfg.temperature;
    echo["eval_pairs"] = cfg.eval_pairs;
    echo["eval_batch"] = cfg.eval_batch;
    echo["accuracy_gate"] = cfg.accuracy_gate;
    echo["out_name"] = out_name;
    ctx.manifest.seed = cfg.seed;
    return echo;
}

json cmd_train_base(const json& in, RunContext& ctx) {
    const std::string enc_path = need_path(in, "encoders");
    ctx.note_input(enc_path);
    const Encoders enc = load_encoders(enc_path);
    TrainConfig cfg = train_config_from(in, 1e-4f, 20000, 64, 0.1f);
    const UNetConfig unet = unet_from_config(in);
    const int T = get_or(in, "T", 1000);
    const ScheduleKind kind = get_or<std::string>(in, "schedule", "linear_beta") == "cosine"
                                  ? ScheduleKind::cosine
                                  : ScheduleKind::linear_beta;
    const std::string out_name = get_or<std::string>(in, "out_name", "base.tdc");

    BaseTrainResult result = train_base(cfg, enc, unet, T, kind);
    save_base_model(result.model, ctx.out_path(out_name), cfg.seed);
    ctx.note_output(out_name);
    json log;
    log["gate_clip_t"] = result.gate_clip_t;
    write_train_log(ctx, fs::path(out_name).stem().string(), result.history.losses, log);

    json echo = train_config_echo(cfg);
    echo["encoders"] = enc_path;
    echo["unet"] = unet_to_json(unet);
    echo["T"] = T;
    echo["schedule"] = kind == ScheduleKind::cosine ? "cosine" : "linear_beta";
    echo["out_name"] = out_name;
    ctx.manifest.seed = cfg.seed;
    return echo;
}

AdapterVariant cli_variant(const std::string& name) {
    if (name == "decoupled" || name == "global" || name == "decoupled_global") {
        return AdapterVariant::global;
    }
    if (name == "finegrained" || name == "decoupled_finegrained") {
        return AdapterVariant::finegrained;
    }
    if (name == "simple" || name == "simple_concat") {
        return AdapterVariant::simple;
    }
    fail(ErrCode::BadArg, "unknown adapter variant: " + name);
}

json cmd_train_adapter(const json& in, RunContext& ctx) {
    const std::string enc_path = need_path(in, "encoders");
    const std::string base_path = need_path(in, "base");
    ctx.note_input(enc_path);
    ctx.note_input(base_path);
    const Encoders enc = load_encoders(enc_path);
    auto base = std::make_shared<BaseModel>(load_base_model(base_path));
    TrainConfig cfg = train_config_from(in, 1e-4f, 8000, 64, 0.05f);
    const std::string variant_name = get_or<std::string>(in, "variant", "decoupled");
    const AdapterVariant variant = cli_variant(variant_name);
    const std::string out_name =
        get_or<std::string>(in, "out_name",
                            std::string("adapter_") + adapter_variant_name(variant) + ".tdc");

    AdapterTrainResult result = train_adapter(cfg, base, enc, variant);
    save_adapter(result.adapter, ctx.out_path(out_name), cfg.seed);
    ctx.note_output(out_name);
    write_train_log(ctx, fs::path(out_name).stem().string(), result.history.losses,
                    json::object());

    json echo = train_config_echo(cfg);
    echo["encoders"] = enc_path;
    echo["base"] = base_path;
    echo["variant"] = variant_name;
    echo["out_name"] = out_name;
    ctx.manifest.seed = cfg.seed;
    return echo;
}

json cmd_finetune_variant(const json& in, RunContext& ctx) {
    const std::string enc_path = need_path(in, "encoders");
    const std::string base_path = need_path(in, "base");
    ctx.note_input(enc_path);
    ctx.note_input(base_path);
    const Encoders enc = load_encoders(enc_path);
    const BaseModel base = load_base_model(base_path);
    TrainConfig cfg = train_config_from(in, 5e-5f, 2000, 16, 0.1f);
    const std::string out_name = get_or<std::string>(in, "out_name", "variant.tdc");

    BaseTrainResult result = finetune_variant(cfg, base, enc);
    save_base_model(result.model, ctx.out_path(out_name), cfg.seed);
    ctx.note_output(out_name);
    write_train_log(ctx, fs::path(out_name).stem().string(), result.history.losses,
                    json::object());

    json echo = train_config_echo(cfg);
    echo["encoders"] = enc_path;
    echo["base"] = base_path;
    echo["out_name"] = out_name;
    ctx.manifest.seed = cfg.seed;
    return echo;
}

json cmd_train_control(const json& in, RunContext& ctx) {
    const std::string enc_path = need_path(in, "encoders");
    const std::string base_path = need_path(in, "base");
    ctx.note_input(enc_path);
    ctx.note_input(base_path);
    const Encoders enc = load_encoders(enc_path);
    auto base = std::make_shared<BaseModel>(load_base_model(base_path));
    TrainConfig cfg = train_config_from(in, 1e-3f, 1000, 16, 0.1f);
    const std::string out_name = get_or<std::string>(in, "out_name", "control.tdc");

    ControlTrainResult result = train_control(cfg, base, enc);
    save_control(result.branch, base->cfg, ctx.out_path(out_name), cfg.seed);
    ctx.note_output(out_name);
    write_train_log(ctx, fs::path(out_name).stem().string(), result.history.losses,
                    json::object());

    json echo = train_config_echo(cfg);
    echo["encoders"] = enc_path;
    echo["base"] = base_path;
    echo["out_name"] = out_name;
    ctx.manifest.seed = cfg.seed;
    return echo;
}

ComposedModel load_composed(const json& in, RunContext& ctx, const Encoders** enc_out,
                            Encoders& enc_storage) {
    const std::string enc_path = need_path(in, "encoders");
    const std::string base_path = need_path(in, "base");
    ctx.note_input(enc_path);
    ctx.note_input(base_path);
    enc_storage = load_encoders(enc_path);
    *enc_out = &enc_storage;
    ComposedModel model;
    model.base = std::make_shared<BaseModel>(load_base_model(base_path));
    if (in.contains("adapter") && in.at("adapter").is_string() &&
        !in.at("adapter").get<std::string>().empty()) {
        const std::string adapter_path = need_path(in, "adapter");
        ctx.note_input(adapter_path);
        model = apply_adapter(model.base, load_adapter(adapter_path));
    }
    if (in.contains("control") && in.at("control").is_string() &&
        !in.at("control").get<std::string>().empty()) {
        const std::string control_path = need_path(in, "control");
        ctx.note_input(control_path);
        model.control = load_control(control_path);
    }
    return model;
}

json cmd_sample(const json& in, RunContext& ctx) {
    Encoders enc_storage;
    const Encoders* enc = nullptr;
    ComposedModel model = load_composed(in, ctx, &enc, enc_storage);

    SampleRequest req;
    req.caption = get_or<std::string>(in, "caption", "");
    req.lambda_weight = get_or(in, "lambda", 1.0f);
    req.w = get_or(in, "cfg", 7.5f);
    req.steps = get_or(in, "steps", 50);
    req.eta = get_or(in, "eta", 0.0f);
    req.seed = get_or<uint64_t>(in, "seed", 0);
    const std::string image_prompt_path = get_or<std::string>(in, "image_prompt", "");
    if (!image_prompt_path.empty()) {
        require(fs::exists(image_prompt_path), ErrCode::IoError,
                "image prompt not found: " + image_prompt_path);
        ctx.note_input(image_prompt_path);
        req.prompt_image = read_ppm(image_prompt_path);
    }
    const std::string hint_path = get_or<std::string>(in, "hint", "");
    if (!hint_path.empty()) {
        require(fs::exists(hint_path), ErrCode::IoError, "hint not found: " + hint_path);
        ctx.note_input(hint_path);
        req.hint = read_ppm_hint(hint_path);
    }
    const std::string out_name = get_or<std::string>(in, "out_name", "sample.ppm");

    Tensor image = sample(req, model, *enc);
    write_ppm(image, ctx.out_path(out_name));
    ctx.note_output(out_name);

    json echo;
    echo["encoders"] = in.at("encoders");
    echo["base"] = in.at("base");
    if (in.contains("adapter")) echo["adapter"] = in.at("adapter");
    if (in.contains("control")) echo["control"] = in.at("control");
    echo["caption"] = req.caption;
    echo["image_prompt"] = image_prompt_path;
    echo["hint"] = hint_path;
    echo["lambda"] = req.lambda_weight;
    echo["cfg"] = req.w;
    echo["steps"] = req.steps;
    echo["eta"] = req.eta;
    echo["seed"] = req.seed;
    echo["out_name"] = out_name;
    ctx.manifest.seed = req.seed;
    return echo;
}

json cmd_evaluate(const json& in, RunContext& ctx) {
    Encoders enc_storage;
    const Encoders* enc = nullptr;
    ComposedModel model = load_composed(in, ctx, &enc, enc_storage);

    const uint64_t seed = get_or<uint64_t>(in, "seed", 0);
    const int n_prompts = get_or(in, "n_prompts", 100);
    const int samples_per_prompt = get_or(in, "samples_per_prompt", 4);
    const int steps = get_or(in, "steps", 50);
    const float w = get_or(in, "w", 7.5f);
    const float lambda_weight = get_or(in, "lambda", 1.0f);
    const uint64_t held_out_offset = get_or<uint64_t>(in, "held_out_offset", 0);
    const bool conflicting = get_or(in, "conflicting", false);
    const bool image_only = get_or(in, "image_only", false);
    const std::string out_stem = get_or<std::string>(in, "out_name", "eval");

    const std::vector<PromptPair> prompts =
        held_out_prompts(mix64(seed, 0xda7a), held_out_offset, n_prompts, conflicting);
    const std::string variant =
        model.adapter ? adapter_variant_name(model.adapter->variant) : "base";
    EvalReport report;
    report.rows.resize(static_cast<size_t>(n_prompts) * samples_per_prompt);
    parallel_for(n_prompts * samples_per_prompt, [&](int idx) {
        const int p = idx / samples_per_prompt;
        SampleRequest req;
        req.caption = image_only ? "" : prompts[p].caption;
        if (model.adapter) {
            req.prompt_image = prompts[p].image;
        }
        req.lambda_weight = lambda_weight;
        req.w = w;
        req.steps = steps;
        req.seed = mix64(seed, 0xe0a1 + static_cast<uint64_t>(idx));
        Tensor gen = sample(req, model, *enc);
        EvalRow row;
        row.variant = variant;
        row.lambda_weight = lambda_weight;
        row.w = w;
        row.seed = req.seed;
        row.clip_i = clip_i(gen, prompts[p].image, *enc);
        row.clip_t = clip_t(gen, prompts[p].caption, *enc);
        report.rows[idx] = row;
    });
    emit_plotdata(report, ctx.out_path(out_stem + ".csv"), ctx.out_path(out_stem + ".json"));
    ctx.note_output(out_stem + ".csv");
    ctx.note_output(out_stem + ".json");

    json echo;
    echo["encoders"] = in.at("encoders");
    echo["base"] = in.at("base");
    if (in.contains("adapter")) echo["adapter"] = in.at("adapter");
    if (in.contains("control")) echo["control"] = in.at("control");
    echo["seed"] = seed;
    echo["n_prompts"] = n_prompts;
    echo["samples_per_prompt"] = samples_per_prompt;
    echo["steps"] = steps;
    echo["w"] = w;
    echo["lambda"] = lambda_weight;
    echo["held_out_offset"] = held_out_offset;
    echo["conflicting"] = conflicting;
    echo["image_only"] = image_only;
    echo["out_name"] = out_stem;
    ctx.manifest.seed = seed;
    return echo;
}

json cmd_ablate(const json& in, RunContext& ctx) {
    const std::string enc_path = need_path(in, "encoders");
    const std::string base_path = need_path(in, "base");
    const std::string a_path = need_path(in, "adapter_a");
    const std::string b_path = need_path(in, "adapter_b");
    ctx.note_input(enc_path);
    ctx.note_input(base_path);
    ctx.note_input(a_path);
    ctx.note_input(b_path);
    const Encoders enc = load_encoders(enc_path);
    auto base = std::make_shared<BaseModel>(load_base_model(base_path));
    const AdapterWeights adapter_a = load_adapter(a_path);
    const AdapterWeights adapter_b = load_adapter(b_path);

    AblateSpec spec;
    spec.seed = get_or<uint64_t>(in, "seed", 0);
    spec.steps = get_or(in, "steps", 50);
    spec.w = get_or(in, "w", 7.5f);
    spec.lambda_weight = get_or(in, "lambda", 1.0f);
    const int n_prompts = get_or(in, "n_prompts", 200);
    const uint64_t held_out_offset = get_or<uint64_t>(in, "held_out_offset", 0);
    const std::string out_stem = get_or<std::string>(in, "out_name", "ablate");

    const std::vector<PromptPair> prompts =
        held_out_prompts(mix64(spec.seed, 0xda7a), held_out_offset, n_prompts, false);
    AblateResult result = ablate(base, adapter_a, adapter_b, prompts, enc, spec);
    emit_plotdata(result.report, ctx.out_path(out_stem + ".csv"),
                  ctx.out_path(out_stem + ".json"));
    ctx.note_output(out_stem + ".csv");
    ctx.note_output(out_stem + ".json");
    {
        json j;
        j["wins"] = result.wins;
        j["losses"] = result.losses;
        j["ties"] = result.ties;
        j["mean_clip_i_a"] = result.mean_clip_i_a;
        j["mean_clip_i_b"] = result.mean_clip_i_b;
        j["p_value"] = result.p_value;
        j["adapter_a"] = adapter_variant_name(adapter_a.variant);
        j["adapter_b"] = adapter_variant_name(adapter_b.variant);
        std::ofstream os(ctx.out_path(out_stem + "_summary.json"), std::ios::trunc);
        os << j.dump(2) << '\n';
        require(os.good(), ErrCode::IoError, "cannot write ablate summary");
        ctx.note_output(out_stem + "_summary.json");
    }

    json echo;
    echo["encoders"] = enc_path;
    echo["base"] = base_path;
    echo["adapter_a"] = a_path;
    echo["adapter_b"] = b_path;
    echo["seed"] = spec.seed;
    echo["steps"] = spec.steps;
    echo["w"] = spec.w;
    echo["lambda"] = spec.lambda_weight;
    echo["n_prompts"] = n_prompts;
    echo["held_out_offset"] = held_out_offset;
    echo["out_name"] = out_stem;
    ctx.manifest.seed = spec.seed;
    return echo;
}

json cmd_lambda_sweep(const json& in, RunContext& ctx) {
    Encoders enc_storage;
    const Encoders* enc = nullptr;
    ComposedModel model = load_composed(in, ctx, &enc, enc_storage);
    require(model.adapter.has_value(), ErrCode::BadArg, "lambda-sweep needs an adapter");

    SweepSpec spec;
    spec.seed = get_or<uint64_t>(in, "seed", 0);
    spec.lambdas = get_or(in, "lambdas", std::vector<float>{0.0f, 0.5f, 1.0f});
    spec.n_per_point = get_or(in, "n_per_point", 4);
    spec.steps = get_or(in, "steps", 50);
    spec.w = get_or(in, "w", 7.5f);
    const int n_prompts = get_or(in, "n_prompts", 100);
    const bool conflicting = get_or(in, "conflicting", true);
    const uint64_t held_out_offset = get_or<uint64_t>(in, "held_out_offset", 0);
    const std::string out_stem = get_or<std::string>(in, "out_name", "sweep");

    const std::vector<PromptPair> prompts =
        held_out_prompts(mix64(spec.seed, 0xda7a), held_out_offset, n_prompts, conflicting);
    EvalReport report = lambda_sweep(prompts, model, *enc, spec);
    emit_plotdata(report, ctx.out_path(out_stem + ".csv"), ctx.out_path(out_stem + ".json"));
    ctx.note_output(out_stem + ".csv");
    ctx.note_output(out_stem + ".json");

    json echo;
    echo["encoders"] = in.at("encoders");
    echo["base"] = in.at("base");
    echo["adapter"] = in.at("adapter");
    echo["seed"] = spec.seed;
    echo["lambdas"] = spec.lambdas;
    echo["n_per_point"] = spec.n_per_point;
    echo["steps"] = spec.steps;
    echo["w"] = spec.w;
    echo["n_prompts"] = n_prompts;
    echo["conflicting"] = conflicting;
    echo["held_out_offset"] = held_out_offset;
    echo["out_name"] = out_stem;
    ctx.manifest.seed = spec.seed;
    return echo;
}

}  // namespace

std::string run_command(const std::string& command, const std::string& config_json,
                        const std::string& out_dir) {
    const json in = parse_config(config_json);
    fs::create_directories(out_dir);
    RunContext ctx;
    ctx.out_dir = out_dir;
    ctx.manifest.command = command;
    ctx.manifest.deterministic = get_or(in, "deterministic", true);
    ctx.manifest.started_at = iso8601_utc_now();

    json echo;
    std::string manifest_name;
    if (command == "train-clip") {
        echo = cmd_train_clip(in, ctx);
    } else if (command == "train-base") {
        echo = cmd_train_base(in, ctx);
    } else if (command == "train-adapter") {
        echo = cmd_train_adapter(in, ctx);
    } else if (command == "finetune-variant") {
        echo = cmd_finetune_variant(in, ctx);
    } else if (command == "train-control") {
        echo = cmd_train_control(in, ctx);
    } else if (command == "sample") {
        echo = cmd_sample(in, ctx);
    } else if (command == "evaluate") {
        echo = cmd_evaluate(in, ctx);
    } else if (command == "ablate") {
        echo = cmd_ablate(in, ctx);
    } else if (command == "lambda-sweep") {
        echo = cmd_lambda_sweep(in, ctx);
    } else {
        fail(ErrCode::BadArg, "unknown command: " + command);
    }
    echo["deterministic"] = ctx.manifest.deterministic;
    ctx.manifest.config_json = echo.dump();
    ctx.manifest.finished_at = iso8601_utc_now();
    const std::string stem =
        echo.contains("out_name") ? fs::path(echo.at("out_name").get<std::string>()).stem().string()
                                  : command;
    const std::string manifest_path = ctx.out_path(stem + ".manifest.json");
    write_manifest(ctx.manifest, manifest_path);
    return manifest_path;
}

std::string run_replay(const std::string& manifest_path, const std::string& out_dir) {
    const RunManifest m = read_manifest(manifest_path);
    return run_command(m.command, m.config_json, out_dir);
}

std::string inspect_checkpoint(const std::string& path) {
    const Checkpoint ckpt = load_checkpoint(path);
    std::ostringstream os;
    os << "container: " << path << "\n";
    os << "metadata: " << ckpt.metadata << "\n";
    os << "records: " << ckpt.records.size() << "\n";
    int64_t total = 0;
    for (const CheckpointRecord& rec : ckpt.records) {
        int64_t n = 1;
        for (int64_t d : rec.dims) {
            n *= d;
        }
        total += n;
        os << "  " << rec.name << " " << shape_str(rec.dims) << " elems=" << n << "\n";
    }
    os << "total_elements: " << total << "\n";
    return os.str();
}

}  // namespace ipa
