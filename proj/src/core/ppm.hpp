#pragma once

#include <string>

#include "tensor.hpp"

namespace ipa {

// Binary PPM (P6, 8-bit). Images map [-1,1] <-> [0,255]; hints use the red
// channel mapped to [0,1].
void write_ppm(const Tensor& image, const std::string& path);
Tensor read_ppm(const std::string& path);        // [3,h,w] in [-1,1]
Tensor read_ppm_hint(const std::string& path);   // [1,h,w] in [0,1]

}  // namespace ipa
