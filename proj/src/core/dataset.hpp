#pragma once

#include <string>
#include <vector>

#include "tensor.hpp"

namespace ipa {

constexpr int kImageSize = 32;

// Train examples use indices [0, kHeldOutBase); held-out evaluation uses
// indices >= kHeldOutBase, so the two ranges are disjoint by construction.
constexpr uint64_t kHeldOutBase = 1ull << 32;

struct SceneShape {
    int kind;   // 0 circle, 1 square, 2 triangle
    int color;  // 0..7
    int size;   // 0 small, 1 large
    int row;    // 0..2
    int col;    // 0..2
};

struct ShapeScene {
    int bg;  // 0..3
    std::vector<SceneShape> shapes;
    uint64_t rng_seed;
};

struct Example {
    Tensor image;  // [3,32,32] in [-1,1]
    std::string caption;
};

ShapeScene sample_scene(uint64_t seed, uint64_t index);
// Same sampler with every shape forced to a triangle; used for the shifted
// fine-tune distribution.
ShapeScene sample_scene_triangles(uint64_t seed, uint64_t index);

Tensor rasterize(const ShapeScene& scene);
std::string caption_of(const ShapeScene& scene);

Example gen_example(uint64_t seed, uint64_t index);
Example gen_example_triangles(uint64_t seed, uint64_t index);

// Sobel-magnitude edge map of an image, [1,32,32] in [0,1].
Tensor edge_hint(const Tensor& image);

// Every caption the grammar can produce (~11k strings); used by tests.
std::vector<std::string> all_captions();

}  // namespace ipa
