#pragma once

#include "infwide/tensor.hpp"

#include <filesystem>

namespace infwide {

/// Reads an 8- or 16-bit PNG as a [1,3,H,W] image scaled to [0,1]. Gray is
/// replicated to three channels; alpha is dropped.
TensorD load_image(const std::filesystem::path& path);

/// Writes a [1,C,H,W] (C = 1 or 3) or [H,W] image, clamped to [0,1], as PNG.
void save_image(const TensorD& image, const std::filesystem::path& path, int bit_depth = 8);

} // namespace infwide
