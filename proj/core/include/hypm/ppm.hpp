#pragma once

#include <filesystem>

#include "hypm/tensor.hpp"

namespace hypm {

/// Read a binary 8-bit PPM (P6) into an {H,W,3} tensor scaled to [0,1].
/// Throws std::runtime_error naming the file on any malformed input;
/// ASCII (P3) and other PNM variants are rejected.
Tensor read_ppm(const std::filesystem::path& path);

/// Write an {H,W,3} tensor with values in [0,1] as binary PPM, quantized to
/// 8 bits by round(v*255).
void write_ppm(const Tensor& image, const std::filesystem::path& path);

}  // namespace hypm
