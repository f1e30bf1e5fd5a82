#pragma once

// Dataset layout, patch sampling and degraded-pair storage.
//   <root>/clean/*.png                 clean images
//   <root>/pairs/<id>/x.png, y.png     8-bit previews
//   <root>/pairs/<id>/x.rt, y.rt, y_lin.rt, k.rt, meta.json

#include "infwide/degrade.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace infwide {

inline constexpr double kMinCropStd = 1e-3;
inline constexpr int kCropRetries = 10;

/// Sorted PNG files in <root>/clean, or in <root> itself when it has no clean/ subdirectory.
std::vector<std::filesystem::path> list_clean_images(const std::filesystem::path& root);
std::vector<TensorD> load_clean_images(const std::filesystem::path& root);

/// [1,C,size,size] window at (top, left).
TensorD crop(const TensorD& image, Index top, Index left, Index height, Index width);
/// Centre crop to the largest extents divisible by `divisor`.
TensorD crop_to_multiple(const TensorD& image, Index divisor);

/// Random patch from one of the images, retried while nearly constant.
TensorD random_patch(const std::vector<TensorD>& images, Index size, std::uint64_t seed);

/// sampler.batch degraded patches. Sample b uses sub-seed split_seed(seed, b).
std::vector<DegradedPair> make_batch(const std::vector<TensorD>& images, const SamplerConfig& sampler,
                                     std::uint64_t seed);

/// Stacked float tensors of a batch, ready for the network.
struct Batch {
    TensorF x, y, y_lin;           // [B,3,H,W]
    std::vector<TensorF> kernels;  // one per sample
    std::vector<double> gains;
};
Batch stack(const std::vector<DegradedPair>& pairs);

void save_pair(const std::filesystem::path& dir, const DegradedPair& pair);
DegradedPair load_pair(const std::filesystem::path& dir);
/// Pair directories under <root>/pairs, sorted by name.
std::vector<std::filesystem::path> list_pairs(const std::filesystem::path& root);

} // namespace infwide
