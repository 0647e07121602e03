#include "model_io.hpp"

#include "json.hpp"

namespace ipa {

namespace {

using nlohmann::json;

json base_meta(const std::string& kind, uint64_t seed) {
    json j;
    j["kind"] = kind;
    j["format"] = "tdc1";
    j["seed"] = seed;
    return j;
}

json parse_meta(const Checkpoint& ckpt, const std::string& want_kind) {
    json j = json::parse(ckpt.metadata);
    const std::string kind = j.at("kind").get<std::string>();
    require(kind == want_kind, ErrCode::ShapeTableMismatch,
            "checkpoint holds a '" + kind + "', expected '" + want_kind + "'");
    return j;
}

}  // namespace

void save_base_model(const BaseModel& model, const std::string& path, uint64_t seed) {
    json j = base_meta("base_model", seed);
    j["unet"] = json::parse(model.cfg.to_json());
    j["T"] = model.T;
    j["schedule"] = model.schedule_kind == ScheduleKind::linear_beta ? "linear_beta" : "cosine";
    save_checkpoint(store_to_checkpoint(model.params, j.dump()), path);
}

BaseModel load_base_model(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path);
    json j = parse_meta(ckpt, "base_model");
    BaseModel model;
    model.cfg = UNetConfig::from_json(j.at("unet").dump());
    model.T = j.at("T").get<int>();
    model.schedule_kind = j.at("schedule").get<std::string>() == "cosine"
                              ? ScheduleKind::cosine
                              : ScheduleKind::linear_beta;
    model.params = checkpoint_to_store(ckpt, false);
    return model;
}

void save_adapter(const AdapterWeights& adapter, const std::string& path, uint64_t seed) {
    json j = base_meta("adapter", seed);
    j["variant"] = adapter_variant_name(adapter.variant);
    j["n_tokens"] = adapter.n_tokens;
    j["base_fingerprint"] = adapter.base_fingerprint;
    j["trained_steps"] = adapter.trained_steps;
    j["trained_batch"] = adapter.trained_batch;
    save_checkpoint(store_to_checkpoint(adapter.params, j.dump()), path);
}

AdapterWeights load_adapter(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path);
    json j = parse_meta(ckpt, "adapter");
    AdapterWeights adapter;
    adapter.variant = adapter_variant_from_name(j.at("variant").get<std::string>());
    adapter.n_tokens = j.at("n_tokens").get<int>();
    adapter.base_fingerprint = j.at("base_fingerprint").get<std::string>();
    adapter.trained_steps = j.at("trained_steps").get<int64_t>();
    adapter.trained_batch = j.at("trained_batch").get<int>();
    adapter.params = checkpoint_to_store(ckpt, false);
    return adapter;
}

void save_encoders(const Encoders& enc, const std::string& path, uint64_t seed) {
    json j = base_meta("encoders", seed);
    j["d_ctx"] = enc.cfg.d_ctx;
    j["text_blocks"] = enc.cfg.text_blocks;
    j["text_heads"] = enc.cfg.text_heads;
    j["max_len"] = enc.cfg.max_len;
    j["img_channels"] = enc.cfg.img_channels;
    j["temperature"] = enc.cfg.temperature;
    save_checkpoint(store_to_checkpoint(enc.params, j.dump()), path);
}

Encoders load_encoders(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path);
    json j = parse_meta(ckpt, "encoders");
    Encoders enc;
    enc.cfg.d_ctx = j.at("d_ctx").get<int>();
    enc.cfg.text_blocks = j.at("text_blocks").get<int>();
    enc.cfg.text_heads = j.at("text_heads").get<int>();
    enc.cfg.max_len = j.at("max_len").get<int>();
    enc.cfg.img_channels = j.at("img_channels").get<std::array<int, 4>>();
    enc.cfg.temperature = j.at("temperature").get<float>();
    enc.params = checkpoint_to_store(ckpt, false);
    enc.params.freeze_all();
    enc.frozen = true;
    return enc;
}

void save_control(const ControlBranch& branch, const UNetConfig& cfg, const std::string& path,
                  uint64_t seed) {
    json j = base_meta("control", seed);
    j["unet"] = json::parse(cfg.to_json());
    j["trunk_channels"] = branch.trunk_channels;
    j["head_channels"] = branch.head_channels;
    save_checkpoint(store_to_checkpoint(branch.params, j.dump()), path);
}

ControlBranch load_control(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path);
    json j = parse_meta(ckpt, "control");
    ControlBranch branch;
    branch.trunk_channels = j.at("trunk_channels").get<std::vector<int>>();
    branch.head_channels = j.at("head_channels").get<std::vector<int>>();
    branch.params = checkpoint_to_store(ckpt, false);
    return branch;
}

std::string checkpoint_kind(const Checkpoint& ckpt) {
    return json::parse(ckpt.metadata).at("kind").get<std::string>();
}

}  // namespace ipa
