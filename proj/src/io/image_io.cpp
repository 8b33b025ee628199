#include "fas/io/image_io.hpp"

#include <cmath>
#include <fstream>
#include <vector>

#include "fas/io/hash.hpp"

namespace fas::io {

using fas::core::Tensor;

void write_ppm(const std::string& path, const Tensor& chw) {
    if (chw.rank() != 3 || chw.dim(0) != 3)
        throw std::invalid_argument("write_ppm: expected [3,H,W]");
    const int64_t h = chw.dim(1), w = chw.dim(2);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("write_ppm: cannot open " + path);
    f << "P6\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> row(static_cast<size_t>(w) * 3);
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x)
            for (int64_t c = 0; c < 3; ++c) {
                double v = chw[(c * h + y) * w + x];
                v = std::min(1.0, std::max(0.0, v));
                row[static_cast<size_t>(x * 3 + c)] =
                    static_cast<unsigned char>(std::lround(v * 255.0));
            }
        f.write(reinterpret_cast<const char*>(row.data()),
                static_cast<std::streamsize>(row.size()));
    }
    if (!f) throw std::runtime_error("write_ppm: write failed " + path);
}

Tensor read_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("read_ppm: cannot open " + path);
    std::string magic;
    f >> magic;
    if (magic != "P6") throw std::runtime_error("read_ppm: not a P6 file: " + path);
    int64_t w = 0, h = 0, maxval = 0;
    f >> w >> h >> maxval;
    if (maxval != 255 || w <= 0 || h <= 0)
        throw std::runtime_error("read_ppm: unsupported header: " + path);
    f.get(); // single whitespace after header
    std::vector<unsigned char> raw(static_cast<size_t>(w * h * 3));
    f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!f) throw std::runtime_error("read_ppm: truncated: " + path);
    Tensor img({3, h, w});
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            for (int64_t c = 0; c < 3; ++c)
                img[(c * h + y) * w + x] =
                    raw[static_cast<size_t>((y * w + x) * 3 + c)] / 255.0;
    return img;
}

uint64_t image_fingerprint(const Tensor& chw) {
    Fnv1a h;
    h.update(chw.data(), static_cast<size_t>(chw.numel()) * sizeof(double));
    return h.digest();
}

} // namespace fas::io
