#pragma once

#include <string>

#include "fas/core/tensor.hpp"

namespace fas::io {

// Images are [3,H,W] doubles in [0,1]; persisted as binary PPM (P6, 8-bit).
// Quantization is round-to-nearest, so save/load round-trips exactly for
// values already on the 1/255 grid.
void write_ppm(const std::string& path, const fas::core::Tensor& chw);
fas::core::Tensor read_ppm(const std::string& path);

uint64_t image_fingerprint(const fas::core::Tensor& chw);

} // namespace fas::io
