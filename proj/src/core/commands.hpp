#pragma once

#include <string>

namespace ipa {

// Runs one workflow with a JSON config (missing keys take defaults), writes
// its artifacts plus a RunManifest into out_dir, and returns the manifest
// path. Commands: train-clip, train-base, train-adapter, finetune-variant,
// train-control, sample, evaluate, ablate, lambda-sweep.
std::string run_command(const std::string& command, const std::string& config_json,
                        const std::string& out_dir);

// Re-executes the command recorded in a manifest; with equal inputs the
// artifacts come out byte-identical.
std::string run_replay(const std::string& manifest_path, const std::string& out_dir);

// Human-readable container report: metadata, shape table, element counts.
std::string inspect_checkpoint(const std::string& path);

}  // namespace ipa
