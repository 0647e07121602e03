#include "ppm.hpp"

#include <cmath>
#include <fstream>

namespace ipa {

void write_ppm(const Tensor& image, const std::string& path) {
    const Shape& s = image.shape();
    require(s.size() == 3 && s[0] == 3, ErrCode::ShapeMismatch, "write_ppm expects [3,h,w]");
    const int64_t h = s[1];
    const int64_t w = s[2];
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    require(os.good(), ErrCode::IoError, "cannot write " + path);
    os << "P6\n" << w << " " << h << "\n255\n";
    const float* v = image.data();
    std::vector<unsigned char> row(3 * w);
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                const float px = v[(c * h + y) * w + x];
                const float clamped = std::min(1.0f, std::max(-1.0f, px));
                row[3 * x + c] =
                    static_cast<unsigned char>(std::lround((clamped + 1.0f) * 0.5f * 255.0f));
            }
        }
        os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    require(os.good(), ErrCode::IoError, "short write to " + path);
}

namespace {

Tensor read_ppm_raw(const std::string& path, int64_t& h, int64_t& w,
                    std::vector<unsigned char>& bytes) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), ErrCode::IoError, "cannot read " + path);
    std::string magic;
    is >> magic;
    require(magic == "P6", ErrCode::IoError, path + " is not a binary PPM");
    int64_t maxval = 0;
    is >> w >> h >> maxval;
    require(w > 0 && h > 0 && maxval == 255, ErrCode::IoError, "unsupported PPM header");
    is.get();  // single whitespace after header
    bytes.resize(static_cast<size_t>(3 * w * h));
    is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    require(is.gcount() == static_cast<std::streamsize>(bytes.size()), ErrCode::IoError,
            "truncated PPM payload in " + path);
    return Tensor();
}

}  // namespace

Tensor read_ppm(const std::string& path) {
    int64_t h = 0, w = 0;
    std::vector<unsigned char> bytes;
    read_ppm_raw(path, h, w, bytes);
    std::vector<float> out(3 * h * w);
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                out[(c * h + y) * w + x] =
                    static_cast<float>(bytes[3 * (y * w + x) + c]) / 255.0f * 2.0f - 1.0f;
            }
        }
    }
    return Tensor::from_data({3, h, w}, std::move(out));
}

Tensor read_ppm_hint(const std::string& path) {
    int64_t h = 0, w = 0;
    std::vector<unsigned char> bytes;
    read_ppm_raw(path, h, w, bytes);
    std::vector<float> out(h * w);
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            out[y * w + x] = static_cast<float>(bytes[3 * (y * w + x)]) / 255.0f;
        }
    }
    return Tensor::from_data({1, h, w}, std::move(out));
}

}  // namespace ipa
