#include "ipadapter.h"

#include <cstring>
#include <memory>
#include <string>

#include "commands.hpp"
#include "dataset.hpp"
#include "metrics.hpp"
#include "model_io.hpp"
#include "sampler.hpp"

namespace {

thread_local std::string g_last_code = "None";
thread_local std::string g_last_message;

ipa_status status_of(ipa::ErrCode code) {
    using ipa::ErrCode;
    switch (code) {
        case ErrCode::IoError:
            return IPA_ERR_IO;
        case ErrCode::BadMagic:
        case ErrCode::VersionUnsupported:
        case ErrCode::TruncatedFile:
        case ErrCode::ShapeTableMismatch:
            return IPA_ERR_FORMAT;
        case ErrCode::NotFrozen:
        case ErrCode::MissingBaseWeights:
        case ErrCode::Disabled:
            return IPA_ERR_STATE;
        case ErrCode::DidNotConverge:
            return IPA_ERR_CONVERGENCE;
        case ErrCode::Internal:
        case ErrCode::FreezeViolation:
            return IPA_ERR_INTERNAL;
        default:
            return IPA_ERR_INVALID_ARG;
    }
}

template <class F>
ipa_status guarded(F&& f) {
    try {
        f();
        g_last_code = "None";
        g_last_message.clear();
        return IPA_OK;
    } catch (const ipa::Error& e) {
        g_last_code = ipa::err_name(e.code());
        g_last_message = e.what();
        return status_of(e.code());
    } catch (const std::exception& e) {
        g_last_code = "Internal";
        g_last_message = e.what();
        return IPA_ERR_INTERNAL;
    }
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

constexpr size_t kImageFloats = 3ull * 32 * 32;

ipa::Tensor image_from_buffer(const float* data) {
    std::vector<float> v(data, data + kImageFloats);
    return ipa::Tensor::from_data({3, 32, 32}, std::move(v));
}

}  // namespace

extern "C" {

struct ipa_session {
    std::optional<ipa::Encoders> encoders;
    ipa::ComposedModel model;
};

const char* ipa_status_name(ipa_status status) {
    switch (status) {
        case IPA_OK: return "IPA_OK";
        case IPA_ERR_INVALID_ARG: return "IPA_ERR_INVALID_ARG";
        case IPA_ERR_IO: return "IPA_ERR_IO";
        case IPA_ERR_FORMAT: return "IPA_ERR_FORMAT";
        case IPA_ERR_STATE: return "IPA_ERR_STATE";
        case IPA_ERR_CONVERGENCE: return "IPA_ERR_CONVERGENCE";
        case IPA_ERR_INTERNAL: return "IPA_ERR_INTERNAL";
    }
    return "IPA_ERR_UNKNOWN";
}

const char* ipa_last_error_code(void) { return g_last_code.c_str(); }
const char* ipa_last_error_message(void) { return g_last_message.c_str(); }

void ipa_string_free(char* s) { std::free(s); }

ipa_session* ipa_session_new(void) { return new ipa_session(); }

void ipa_session_free(ipa_session* s) { delete s; }

ipa_status ipa_load_encoders(ipa_session* s, const char* path) {
    return guarded([&] {
        ipa::require(s && path, ipa::ErrCode::BadArg, "null session or path");
        s->encoders = ipa::load_encoders(path);
    });
}

ipa_status ipa_load_base(ipa_session* s, const char* path) {
    return guarded([&] {
        ipa::require(s && path, ipa::ErrCode::BadArg, "null session or path");
        s->model.base = std::make_shared<ipa::BaseModel>(ipa::load_base_model(path));
        s->model.adapter.reset();
        s->model.fingerprint_mismatch = false;
    });
}

ipa_status ipa_load_adapter(ipa_session* s, const char* path) {
    return guarded([&] {
        ipa::require(s && path, ipa::ErrCode::BadArg, "null session or path");
        ipa::require(s->model.base != nullptr, ipa::ErrCode::MissingBaseWeights,
                     "load a base model before the adapter");
        auto control = std::move(s->model.control);
        s->model = ipa::apply_adapter(s->model.base, ipa::load_adapter(path));
        s->model.control = std::move(control);
    });
}

ipa_status ipa_load_control(ipa_session* s, const char* path) {
    return guarded([&] {
        ipa::require(s && path, ipa::ErrCode::BadArg, "null session or path");
        s->model.control = ipa::load_control(path);
    });
}

int ipa_session_fingerprint_warning(const ipa_session* s) {
    return s && s->model.fingerprint_mismatch ? 1 : 0;
}

ipa_status ipa_sample_image(ipa_session* s, const ipa_sample_request* req, float* out_image) {
    return guarded([&] {
        ipa::require(s && req && out_image, ipa::ErrCode::BadArg, "null argument");
        ipa::require(s->encoders.has_value(), ipa::ErrCode::MissingBaseWeights,
                     "load encoders first");
        ipa::require(s->model.base != nullptr, ipa::ErrCode::MissingBaseWeights,
                     "load a base model first");
        ipa::SampleRequest r;
        r.caption = req->caption ? req->caption : "";
        if (req->image_prompt) {
            r.prompt_image = image_from_buffer(req->image_prompt);
        }
        if (req->hint) {
            std::vector<float> h(req->hint, req->hint + 32 * 32);
            r.hint = ipa::Tensor::from_data({1, 32, 32}, std::move(h));
        }
        r.lambda_weight = req->lambda_weight;
        r.w = req->guidance;
        r.steps = req->steps;
        r.eta = req->eta;
        r.seed = req->seed;
        const ipa::Tensor image = ipa::sample(r, s->model, *s->encoders);
        std::memcpy(out_image, image.data(), kImageFloats * sizeof(float));
    });
}

ipa_status ipa_clip_image_score(ipa_session* s, const float* image_a, const float* image_b,
                                float* out_score) {
    return guarded([&] {
        ipa::require(s && image_a && image_b && out_score, ipa::ErrCode::BadArg, "null argument");
        ipa::require(s->encoders.has_value(), ipa::ErrCode::MissingBaseWeights,
                     "load encoders first");
        *out_score =
            ipa::clip_i(image_from_buffer(image_a), image_from_buffer(image_b), *s->encoders);
    });
}

ipa_status ipa_clip_text_score(ipa_session* s, const float* image, const char* caption,
                               float* out_score) {
    return guarded([&] {
        ipa::require(s && image && caption && out_score, ipa::ErrCode::BadArg, "null argument");
        ipa::require(s->encoders.has_value(), ipa::ErrCode::MissingBaseWeights,
                     "load encoders first");
        *out_score = ipa::clip_t(image_from_buffer(image), caption, *s->encoders);
    });
}

ipa_status ipa_dataset_example(uint64_t seed, uint64_t index, float* out_image,
                               char** out_caption) {
    return guarded([&] {
        ipa::require(out_image != nullptr, ipa::ErrCode::BadArg, "null image buffer");
        const ipa::Example ex = ipa::gen_example(seed, index);
        std::memcpy(out_image, ex.image.data(), kImageFloats * sizeof(float));
        if (out_caption) {
            *out_caption = dup_string(ex.caption);
        }
    });
}

ipa_status ipa_run_command(const char* command, const char* config_json, const char* out_dir,
                           char** out_manifest_path) {
    return guarded([&] {
        ipa::require(command && out_dir, ipa::ErrCode::BadArg, "null command or out_dir");
        const std::string manifest =
            ipa::run_command(command, config_json ? config_json : "", out_dir);
        if (out_manifest_path) {
            *out_manifest_path = dup_string(manifest);
        }
    });
}

ipa_status ipa_replay(const char* manifest_path, const char* out_dir,
                      char** out_manifest_path) {
    return guarded([&] {
        ipa::require(manifest_path && out_dir, ipa::ErrCode::BadArg, "null argument");
        const std::string manifest = ipa::run_replay(manifest_path, out_dir);
        if (out_manifest_path) {
            *out_manifest_path = dup_string(manifest);
        }
    });
}

ipa_status ipa_inspect(const char* path, char** out_text) {
    return guarded([&] {
        ipa::require(path && out_text, ipa::ErrCode::BadArg, "null argument");
        *out_text = dup_string(ipa::inspect_checkpoint(path));
    });
}

}  // extern "C"
