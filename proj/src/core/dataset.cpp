#include "dataset.hpp"

#include <array>
#include <cmath>

#include "vocab.hpp"

namespace ipa {

namespace {

constexpr int kNumColors = 8;
constexpr int kNumBg = 4;

const char* kSizeWords[2] = {"small", "large"};
const char* kColorWords[kNumColors] = {"red",  "green",   "blue",   "yellow",
                                       "cyan", "magenta", "orange", "purple"};
const char* kKindWords[3] = {"circle", "square", "triangle"};
const char* kRowWords[3] = {"top", "middle", "bottom"};
const char* kColWords[3] = {"left", "center", "right"};
const char* kBgWords[kNumBg] = {"gray", "black", "tan", "navy"};

const std::array<std::array<float, 3>, kNumColors> kColorRgb = {{
    {1.0f, -1.0f, -1.0f},   // red
    {-1.0f, 1.0f, -1.0f},   // green
    {-1.0f, -1.0f, 1.0f},   // blue
    {1.0f, 1.0f, -1.0f},    // yellow
    {-1.0f, 1.0f, 1.0f},    // cyan
    {1.0f, -1.0f, 1.0f},    // magenta
    {1.0f, 0.1f, -1.0f},    // orange
    {0.25f, -1.0f, 0.6f},   // purple
}};

const std::array<std::array<float, 3>, kNumBg> kBgRgb = {{
    {0.0f, 0.0f, 0.0f},      // gray
    {-1.0f, -1.0f, -1.0f},   // black
    {0.55f, 0.25f, -0.25f},  // tan
    {-0.75f, -0.75f, -0.1f}, // navy
}};

float cell_center(int idx) { return (static_cast<float>(idx) + 0.5f) * kImageSize / 3.0f; }

bool inside_shape(const SceneShape& s, float x, float y) {
    const float cx = cell_center(s.col);
    const float cy = cell_center(s.row);
    const float r = s.size == 0 ? 3.4f : 5.0f;
    const float dx = x - cx;
    const float dy = y - cy;
    switch (s.kind) {
        case 0:
            return dx * dx + dy * dy <= r * r;
        case 1:
            return std::fabs(dx) <= r * 0.9f && std::fabs(dy) <= r * 0.9f;
        default: {
            // upward triangle: apex at cy - r, base at cy + 0.75r
            const float top = cy - r;
            const float bottom = cy + 0.75f * r;
            if (y < top || y > bottom) {
                return false;
            }
            const float half_w = (y - top) / (bottom - top) * r;
            return std::fabs(dx) <= half_w;
        }
    }
}

ShapeScene sample_scene_impl(uint64_t seed, uint64_t index, bool triangles_only) {
    Rng rng(mix64(seed, index));
    ShapeScene scene;
    scene.rng_seed = mix64(seed, index);
    scene.bg = static_cast<int>(rng.uniform_int(0, kNumBg - 1));
    const int n = rng.uniform() < 0.35 ? 2 : 1;
    int first_cell = -1;
    for (int i = 0; i < n; ++i) {
        SceneShape s;
        s.kind = triangles_only ? 2 : static_cast<int>(rng.uniform_int(0, 2));
        s.color = static_cast<int>(rng.uniform_int(0, kNumColors - 1));
        s.size = static_cast<int>(rng.uniform_int(0, 1));
        int cell = static_cast<int>(rng.uniform_int(0, 8));
        while (cell == first_cell) {
            cell = static_cast<int>(rng.uniform_int(0, 8));
        }
        if (i == 0) {
            first_cell = cell;
        }
        s.row = cell / 3;
        s.col = cell % 3;
        scene.shapes.push_back(s);
    }
    return scene;
}

}  // namespace

ShapeScene sample_scene(uint64_t seed, uint64_t index) {
    return sample_scene_impl(seed, index, false);
}

ShapeScene sample_scene_triangles(uint64_t seed, uint64_t index) {
    return sample_scene_impl(seed, index, true);
}

Tensor rasterize(const ShapeScene& scene) {
    std::vector<float> px(3 * kImageSize * kImageSize);
    const auto& bg = kBgRgb[scene.bg];
    for (int c = 0; c < 3; ++c) {
        std::fill(px.begin() + c * kImageSize * kImageSize,
                  px.begin() + (c + 1) * kImageSize * kImageSize, bg[c]);
    }
    // 2x2 supersampled coverage, painter's order
    for (const SceneShape& s : scene.shapes) {
        const auto& rgb = kColorRgb[s.color];
        for (int y = 0; y < kImageSize; ++y) {
            for (int x = 0; x < kImageSize; ++x) {
                int hits = 0;
                for (int sy = 0; sy < 2; ++sy) {
                    for (int sx = 0; sx < 2; ++sx) {
                        const float fy = static_cast<float>(y) + 0.25f + 0.5f * sy;
                        const float fx = static_cast<float>(x) + 0.25f + 0.5f * sx;
                        hits += inside_shape(s, fx, fy) ? 1 : 0;
                    }
                }
                if (hits == 0) {
                    continue;
                }
                const float cov = static_cast<float>(hits) * 0.25f;
                for (int c = 0; c < 3; ++c) {
                    float& v = px[(c * kImageSize + y) * kImageSize + x];
                    v = rgb[c] * cov + v * (1.0f - cov);
                }
            }
        }
    }
    return Tensor::from_data({3, kImageSize, kImageSize}, std::move(px));
}

std::string caption_of(const ShapeScene& scene) {
    const auto shape_phrase = [](const SceneShape& s) {
        return std::string("a ") + kSizeWords[s.size] + " " + kColorWords[s.color] + " " +
               kKindWords[s.kind];
    };
    std::string caption;
    if (scene.shapes.size() == 1) {
        const SceneShape& s = scene.shapes[0];
        caption = shape_phrase(s) + " at " + kRowWords[s.row] + " " + kColWords[s.col];
    } else {
        caption = shape_phrase(scene.shapes[0]) + " and " + shape_phrase(scene.shapes[1]);
    }
    caption += std::string(" on ") + kBgWords[scene.bg];
    return caption;
}

Example gen_example(uint64_t seed, uint64_t index) {
    const ShapeScene scene = sample_scene(seed, index);
    return Example{rasterize(scene), caption_of(scene)};
}

Example gen_example_triangles(uint64_t seed, uint64_t index) {
    const ShapeScene scene = sample_scene_triangles(seed, index);
    return Example{rasterize(scene), caption_of(scene)};
}

Tensor edge_hint(const Tensor& image) {
    require(image.shape() == Shape({3, kImageSize, kImageSize}), ErrCode::ShapeMismatch,
            "edge_hint expects [3,32,32]");
    const float* v = image.data();
    std::vector<float> gray(kImageSize * kImageSize);
    const int hw = kImageSize * kImageSize;
    for (int i = 0; i < hw; ++i) {
        gray[i] = 0.299f * v[i] + 0.587f * v[hw + i] + 0.114f * v[2 * hw + i];
    }
    auto at = [&](int y, int x) {
        y = std::min(std::max(y, 0), kImageSize - 1);
        x = std::min(std::max(x, 0), kImageSize - 1);
        return gray[y * kImageSize + x];
    };
    std::vector<float> hint(hw);
    for (int y = 0; y < kImageSize; ++y) {
        for (int x = 0; x < kImageSize; ++x) {
            const float gx = (at(y - 1, x + 1) + 2.0f * at(y, x + 1) + at(y + 1, x + 1)) -
                             (at(y - 1, x - 1) + 2.0f * at(y, x - 1) + at(y + 1, x - 1));
            const float gy = (at(y + 1, x - 1) + 2.0f * at(y + 1, x) + at(y + 1, x + 1)) -
                             (at(y - 1, x - 1) + 2.0f * at(y - 1, x) + at(y - 1, x + 1));
            hint[y * kImageSize + x] =
                std::min(1.0f, std::sqrt(gx * gx + gy * gy) * 0.25f);
        }
    }
    return Tensor::from_data({1, kImageSize, kImageSize}, std::move(hint));
}

std::vector<std::string> all_captions() {
    std::vector<std::string> out;
    for (int bg = 0; bg < kNumBg; ++bg) {
        for (int size = 0; size < 2; ++size) {
            for (int color = 0; color < kNumColors; ++color) {
                for (int kind = 0; kind < 3; ++kind) {
                    for (int row = 0; row < 3; ++row) {
                        for (int col = 0; col < 3; ++col) {
                            ShapeScene s{bg, {SceneShape{kind, color, size, row, col}}, 0};
                            out.push_back(caption_of(s));
                        }
                    }
                }
            }
        }
    }
    // two-shape captions (positions are not mentioned)
    for (int bg = 0; bg < kNumBg; ++bg) {
        for (int s1 = 0; s1 < 2 * kNumColors * 3; ++s1) {
            for (int s2 = 0; s2 < 2 * kNumColors * 3; ++s2) {
                SceneShape a{s1 % 3, (s1 / 3) % kNumColors, s1 / (3 * kNumColors), 0, 0};
                SceneShape b{s2 % 3, (s2 / 3) % kNumColors, s2 / (3 * kNumColors), 1, 1};
                ShapeScene s{bg, {a, b}, 0};
                out.push_back(caption_of(s));
            }
        }
    }
    return out;
}

}  // namespace ipa
