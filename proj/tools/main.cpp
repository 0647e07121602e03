// ipadapter CLI: thin argument layer over the C API in ipadapter.h.
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ipadapter.h"
#include "json.hpp"

namespace {

using nlohmann::json;

struct GlobalOpts {
    std::string config_path;
    std::string out_dir = "out";
    uint64_t seed = 0;
    bool seed_set = false;
    bool deterministic = true;
};

json load_config_file(const std::string& path) {
    if (path.empty()) {
        return json::object();
    }
    std::ifstream is(path);
    if (!is.good()) {
        std::fprintf(stderr, "error_code=IoError: cannot read config %s\n", path.c_str());
        std::exit(1);
    }
    json j = json::parse(is, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        std::fprintf(stderr, "error_code=BadArg: config %s is not a JSON object\n", path.c_str());
        std::exit(1);
    }
    return j;
}

int run(const std::string& command, const json& config, const std::string& out_dir) {
    char* manifest = nullptr;
    const ipa_status status =
        ipa_run_command(command.c_str(), config.dump().c_str(), out_dir.c_str(), &manifest);
    if (status != IPA_OK) {
        std::fprintf(stderr, "error_code=%s: %s\n", ipa_last_error_code(),
                     ipa_last_error_message());
        return 1;
    }
    std::printf("wrote manifest %s\n", manifest);
    ipa_string_free(manifest);
    return 0;
}

// Adds an option that lands in the config object only when the user set it.
template <class T>
void opt(CLI::App* cmd, json& cfg, const std::string& flag, const std::string& key,
         const std::string& desc) {
    auto value = std::make_shared<T>();
    cmd->add_option_function<T>(
           flag, [&cfg, key](const T& v) { cfg[key] = v; }, desc)
        ->expected(1);
    (void)value;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"image-prompt adapter toolkit for a small pixel-space diffusion model"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--config", g.config_path, "JSON config file (flags override it)");
    app.add_option("--out", g.out_dir, "output directory")->capture_default_str();
    app.add_flag("--deterministic,!--no-deterministic", g.deterministic,
                 "serial deterministic execution (default on)");
    app.add_option("--seed", g.seed, "global seed")->each([&](const std::string&) {
        g.seed_set = true;
    });

    struct Sub {
        CLI::App* cmd = nullptr;
        json cfg = json::object();
    };
    std::vector<std::string> commands = {"train-clip",    "train-base",   "train-adapter",
                                         "finetune-variant", "train-control", "sample",
                                         "evaluate",      "ablate",       "lambda-sweep"};
    std::map<std::string, Sub> subs;
    for (const std::string& name : commands) {
        Sub& sub = subs[name];
        sub.cmd = app.add_subcommand(name, name);
        sub.cmd->fallthrough();
    }

    auto& clip = subs["train-clip"];
    opt<int>(clip.cmd, clip.cfg, "--steps", "steps", "optimizer steps");
    opt<int>(clip.cmd, clip.cfg, "--batch", "batch", "batch size");
    opt<float>(clip.cmd, clip.cfg, "--lr", "lr", "learning rate");
    opt<float>(clip.cmd, clip.cfg, "--accuracy-gate", "accuracy_gate", "retrieval gate");
    opt<int>(clip.cmd, clip.cfg, "--eval-pairs", "eval_pairs", "held-out pairs for the gate");
    opt<std::string>(clip.cmd, clip.cfg, "--out-name", "out_name", "checkpoint file name");

    auto& tbase = subs["train-base"];
    opt<std::string>(tbase.cmd, tbase.cfg, "--encoders", "encoders", "encoder checkpoint");
    opt<int>(tbase.cmd, tbase.cfg, "--steps", "steps", "optimizer steps");
    opt<int>(tbase.cmd, tbase.cfg, "--batch", "batch", "batch size");
    opt<float>(tbase.cmd, tbase.cfg, "--lr", "lr", "learning rate");
    opt<int>(tbase.cmd, tbase.cfg, "--base-channels", "__base_channels", "UNet width");
    opt<float>(tbase.cmd, tbase.cfg, "--clip-t-gate", "clip_t_gate", "alignment gate");
    opt<std::string>(tbase.cmd, tbase.cfg, "--out-name", "out_name", "checkpoint file name");

    auto& tad = subs["train-adapter"];
    opt<std::string>(tad.cmd, tad.cfg, "--encoders", "encoders", "encoder checkpoint");
    opt<std::string>(tad.cmd, tad.cfg, "--base", "base", "base model checkpoint");
    opt<std::string>(tad.cmd, tad.cfg, "--variant", "variant",
                     "decoupled | simple | finegrained");
    opt<int>(tad.cmd, tad.cfg, "--steps", "steps", "optimizer steps");
    opt<int>(tad.cmd, tad.cfg, "--batch", "batch", "batch size");
    opt<float>(tad.cmd, tad.cfg, "--lr", "lr", "learning rate");
    opt<std::string>(tad.cmd, tad.cfg, "--out-name", "out_name", "checkpoint file name");

    auto& tfv = subs["finetune-variant"];
    opt<std::string>(tfv.cmd, tfv.cfg, "--encoders", "encoders", "encoder checkpoint");
    opt<std::string>(tfv.cmd, tfv.cfg, "--base", "base", "base model checkpoint");
    opt<int>(tfv.cmd, tfv.cfg, "--steps", "steps", "optimizer steps");
    opt<int>(tfv.cmd, tfv.cfg, "--batch", "batch", "batch size");
    opt<float>(tfv.cmd, tfv.cfg, "--lr", "lr", "learning rate");
    opt<std::string>(tfv.cmd, tfv.cfg, "--out-name", "out_name", "checkpoint file name");

    auto& tcn = subs["train-control"];
    opt<std::string>(tcn.cmd, tcn.cfg, "--encoders", "encoders", "encoder checkpoint");
    opt<std::string>(tcn.cmd, tcn.cfg, "--base", "base", "base model checkpoint");
    opt<int>(tcn.cmd, tcn.cfg, "--steps", "steps", "optimizer steps");
    opt<int>(tcn.cmd, tcn.cfg, "--batch", "batch", "batch size");
    opt<float>(tcn.cmd, tcn.cfg, "--lr", "lr", "learning rate");
    opt<std::string>(tcn.cmd, tcn.cfg, "--out-name", "out_name", "checkpoint file name");

    auto& smp = subs["sample"];
    opt<std::string>(smp.cmd, smp.cfg, "--encoders", "encoders", "encoder checkpoint");
    opt<std::string>(smp.cmd, smp.cfg, "--base", "base", "base model checkpoint");
    opt<std::string>(smp.cmd, smp.cfg, "--adapter", "adapter", "adapter checkpoint");
    opt<std::string>(smp.cmd, smp.cfg, "--control", "control", "control checkpoint");
    opt<std::string>(smp.cmd, smp.cfg, "--caption", "caption", "text prompt");
    opt<std::string>(smp.cmd, smp.cfg, "--image-prompt", "image_prompt", "prompt PPM path");
    opt<std::string>(smp.cmd, smp.cfg, "--hint", "hint", "edge hint PPM path");
    opt<float>(smp.cmd, smp.cfg, "--lambda", "lambda", "image-condition weight");
    opt<float>(smp.cmd, smp.cfg, "--cfg", "cfg", "guidance scale w");
    opt<int>(smp.cmd, smp.cfg, "--steps", "steps", "DDIM steps");
    opt<float>(smp.cmd, smp.cfg, "--eta", "eta", "DDIM eta");
    opt<std::string>(smp.cmd, smp.cfg, "--out-name", "out_name", "output PPM name");

    auto& evl = subs["evaluate"];
    opt<std::string>(evl.cmd, evl.cfg, "--encoders", "encoders", "encoder checkpoint");
    opt<std::string>(evl.cmd, evl.cfg, "--base", "base", "base model checkpoint");
    opt<std::string>(evl.cmd, evl.cfg, "--adapter", "adapter", "adapter checkpoint");
    opt<std::string>(evl.cmd, evl.cfg, "--control", "control", "control checkpoint");
    opt<int>(evl.cmd, evl.cfg, "--n-prompts", "n_prompts", "held-out prompts");
    opt<int>(evl.cmd, evl.cfg, "--samples-per-prompt", "samples_per_prompt", "samples each");
    opt<int>(evl.cmd, evl.cfg, "--steps", "steps", "DDIM steps");
    opt<float>(evl.cmd, evl.cfg, "--w", "w", "guidance scale");
    opt<float>(evl.cmd, evl.cfg, "--lambda", "lambda", "image-condition weight");
    evl.cmd->add_flag_callback("--image-only", [&] { evl.cfg["image_only"] = true; },
                               "empty caption, image prompt only");
    opt<std::string>(evl.cmd, evl.cfg, "--out-name", "out_name", "report stem");

    auto& abl = subs["ablate"];
    opt<std::string>(abl.cmd, abl.cfg, "--encoders", "encoders", "encoder checkpoint");
    opt<std::string>(abl.cmd, abl.cfg, "--base", "base", "base model checkpoint");
    opt<std::string>(abl.cmd, abl.cfg, "--adapter-a", "adapter_a", "first adapter");
    opt<std::string>(abl.cmd, abl.cfg, "--adapter-b", "adapter_b", "second adapter");
    opt<int>(abl.cmd, abl.cfg, "--n-prompts", "n_prompts", "held-out prompts");
    opt<int>(abl.cmd, abl.cfg, "--steps", "steps", "DDIM steps");
    opt<float>(abl.cmd, abl.cfg, "--w", "w", "guidance scale");
    opt<std::string>(abl.cmd, abl.cfg, "--out-name", "out_name", "report stem");

    auto& swp = subs["lambda-sweep"];
    opt<std::string>(swp.cmd, swp.cfg, "--encoders", "encoders", "encoder checkpoint");
    opt<std::string>(swp.cmd, swp.cfg, "--base", "base", "base model checkpoint");
    opt<std::string>(swp.cmd, swp.cfg, "--adapter", "adapter", "adapter checkpoint");
    opt<int>(swp.cmd, swp.cfg, "--n-prompts", "n_prompts", "prompts per point");
    opt<int>(swp.cmd, swp.cfg, "--n-per-point", "n_per_point", "samples per prompt");
    opt<int>(swp.cmd, swp.cfg, "--steps", "steps", "DDIM steps");
    opt<float>(swp.cmd, swp.cfg, "--w", "w", "guidance scale");
    std::string lambdas_csv;
    swp.cmd->add_option("--lambdas", lambdas_csv, "comma-separated lambda grid");
    opt<std::string>(swp.cmd, swp.cfg, "--out-name", "out_name", "report stem");

    std::string inspect_path;
    CLI::App* insp = app.add_subcommand("inspect", "print container metadata and shape table");
    insp->fallthrough();
    insp->add_option("path", inspect_path, "checkpoint path")->required();

    std::string replay_path;
    CLI::App* repl = app.add_subcommand("replay", "re-run the command recorded in a manifest");
    repl->fallthrough();
    repl->add_option("manifest", replay_path, "manifest path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (insp->parsed()) {
        char* text = nullptr;
        if (ipa_inspect(inspect_path.c_str(), &text) != IPA_OK) {
            std::fprintf(stderr, "error_code=%s: %s\n", ipa_last_error_code(),
                         ipa_last_error_message());
            return 1;
        }
        std::fputs(text, stdout);
        ipa_string_free(text);
        return 0;
    }
    if (repl->parsed()) {
        char* manifest = nullptr;
        if (ipa_replay(replay_path.c_str(), g.out_dir.c_str(), &manifest) != IPA_OK) {
            std::fprintf(stderr, "error_code=%s: %s\n", ipa_last_error_code(),
                         ipa_last_error_message());
            return 1;
        }
        std::printf("wrote manifest %s\n", manifest);
        ipa_string_free(manifest);
        return 0;
    }

    for (auto& [name, sub] : subs) {
        if (!sub.cmd->parsed()) {
            continue;
        }
        json cfg = load_config_file(g.config_path);
        for (auto& [key, value] : sub.cfg.items()) {
            if (key == "__base_channels") {
                if (!cfg.contains("unet")) {
                    cfg["unet"] = json::object();
                }
                cfg["unet"]["base_channels"] = value;
            } else {
                cfg[key] = value;
            }
        }
        if (name == "lambda-sweep" && !lambdas_csv.empty()) {
            std::vector<float> lambdas;
            std::stringstream ss(lambdas_csv);
            std::string item;
            while (std::getline(ss, item, ',')) {
                lambdas.push_back(std::strtof(item.c_str(), nullptr));
            }
            cfg["lambdas"] = lambdas;
        }
        if (g.seed_set) {
            cfg["seed"] = g.seed;
        }
        cfg["deterministic"] = g.deterministic;
        return run(name, cfg, g.out_dir);
    }
    return 2;
}
