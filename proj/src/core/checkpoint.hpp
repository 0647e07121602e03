#pragma once

#include <string>

#include "param_store.hpp"

namespace ipa {

// On-disk container: magic "TDC1", version, raw metadata bytes, then named
// f32 records. All integers little-endian. The header and every record carry
// a CRC32, so any single-byte corruption is detected. Metadata is stored and
// returned as raw bytes so it round-trips exactly.
struct CheckpointRecord {
    std::string name;
    Shape dims;
    std::vector<float> data;
};

struct Checkpoint {
    std::string metadata;  // UTF-8 JSON blob, preserved byte-exactly
    std::vector<CheckpointRecord> records;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// ParamStore <-> record list. Loading marks every entry frozen unless asked
// otherwise; training code unfreezes what it owns.
Checkpoint store_to_checkpoint(const ParamStore& store, std::string metadata);
ParamStore checkpoint_to_store(const Checkpoint& ckpt, bool trainable = false);

std::string sha256_hex(const std::vector<unsigned char>& bytes);
std::string sha256_hex(const std::string& bytes);
std::string file_sha256(const std::string& path);

}  // namespace ipa
