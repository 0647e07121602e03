#pragma once

#include "adapter.hpp"
#include "checkpoint.hpp"
#include "control.hpp"
#include "encoders.hpp"
#include "unet.hpp"

namespace ipa {

// Typed model <-> container glue. Metadata carries the config echo plus the
// creation seed; it never contains wall-clock data, so saved files are
// byte-stable across reruns.
void save_base_model(const BaseModel& model, const std::string& path, uint64_t seed);
BaseModel load_base_model(const std::string& path);

void save_adapter(const AdapterWeights& adapter, const std::string& path, uint64_t seed);
AdapterWeights load_adapter(const std::string& path);

void save_encoders(const Encoders& enc, const std::string& path, uint64_t seed);
Encoders load_encoders(const std::string& path);

void save_control(const ControlBranch& branch, const UNetConfig& cfg, const std::string& path,
                  uint64_t seed);
ControlBranch load_control(const std::string& path);

// Metadata JSON of a container without loading tensors into models.
std::string checkpoint_kind(const Checkpoint& ckpt);

}  // namespace ipa
