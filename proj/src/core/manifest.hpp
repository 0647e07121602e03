#pragma once

#include <map>
#include <string>
#include <vector>

namespace ipa {

// One manifest per artifact-producing run, written atomically next to the
// outputs. Replaying the recorded command + config reproduces the artifacts
// byte for byte (timestamps live only here, never inside artifacts).
struct RunManifest {
    std::string command;
    std::string config_json;  // full resolved config
    uint64_t seed = 0;
    bool deterministic = true;
    std::map<std::string, std::string> input_hashes;  // path -> sha256
    std::string started_at;
    std::string finished_at;
    std::vector<std::string> outputs;  // paths relative to the manifest dir
};

void write_manifest(const RunManifest& manifest, const std::string& path);
RunManifest read_manifest(const std::string& path);

std::string iso8601_utc_now();

}  // namespace ipa
