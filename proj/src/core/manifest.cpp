#include "manifest.hpp"

#include <cstdio>
#include <ctime>
#include <fstream>

#include "common.hpp"
#include "json.hpp"

namespace ipa {

void write_manifest(const RunManifest& manifest, const std::string& path) {
    nlohmann::json j;
    j["command"] = manifest.command;
    j["config"] = nlohmann::json::parse(manifest.config_json);
    j["seed"] = manifest.seed;
    j["deterministic"] = manifest.deterministic;
    j["input_hashes"] = manifest.input_hashes;
    j["started_at"] = manifest.started_at;
    j["finished_at"] = manifest.finished_at;
    j["outputs"] = manifest.outputs;
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::trunc);
        require(os.good(), ErrCode::IoError, "cannot write " + tmp);
        os << j.dump(2) << '\n';
        require(os.good(), ErrCode::IoError, "short write to " + tmp);
    }
    require(std::rename(tmp.c_str(), path.c_str()) == 0, ErrCode::IoError,
            "cannot move " + tmp + " into place");
}

RunManifest read_manifest(const std::string& path) {
    std::ifstream is(path);
    require(is.good(), ErrCode::IoError, "cannot read " + path);
    nlohmann::json j;
    is >> j;
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.config_json = j.at("config").dump();
    m.seed = j.at("seed").get<uint64_t>();
    m.deterministic = j.at("deterministic").get<bool>();
    m.input_hashes = j.at("input_hashes").get<std::map<std::string, std::string>>();
    m.started_at = j.at("started_at").get<std::string>();
    m.finished_at = j.at("finished_at").get<std::string>();
    m.outputs = j.at("outputs").get<std::vector<std::string>>();
    return m;
}

std::string iso8601_utc_now() {
    const std::time_t now = std::time(nullptr);
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

}  // namespace ipa
