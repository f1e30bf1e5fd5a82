#pragma once

// Low-light degradation: camera-shake blur, the sensor noise chain
// (shot noise, clipped-Poisson dark current, readout noise, row streaks, gain)
// and highlight saturation.

#include "infwide/sampler.hpp"
#include "infwide/tensor.hpp"

#include <array>
#include <cstdint>

namespace infwide {

/// Normalized, nonnegative, odd-sided point-spread function.
struct BlurKernel {
    TensorD values; // side x side

    [[nodiscard]] Index side() const { return values.dim(0); }
    /// Checks sum == 1 within 1e-12, nonnegativity and odd side.
    void validate() const;
};

/// Camera-shake kernel from a seeded random-walk trajectory. The side is drawn
/// uniformly among the odd values in [side_min, side_max].
BlurKernel generate_kernel(std::uint64_t seed, int side_min = 13, int side_max = 35);

enum class ConvolveMode { circular_fft, direct_circular };

/// Periodic-boundary convolution of every plane of a [B,C,H,W] image with k.
TensorD convolve(const TensorD& x, const BlurKernel& k, ConvolveMode mode = ConvolveMode::circular_fft);

/// Sensor model parameters. Gains and streaks act per colour channel.
struct NoiseParams {
    double dark_mean = 0.0;  // N_d
    double read_std = 0.0;   // sigma_r
    double streak_std = 0.0; // sigma_beta
    double gain = 1.0;       // K = K_a * K_d
    double attenuation = 1.0; // M
    double full_scale = 500.0; // Q
    std::array<double, 3> channel_gain{1.0, 1.0, 1.0}; // multiplies K per channel
    bool quantize = false;

    [[nodiscard]] double channel_k(Index c) const { return gain * channel_gain[static_cast<std::size_t>(c % 3)]; }
    void validate() const;
};

void to_json(nlohmann::json& j, const NoiseParams& p);
void from_json(const nlohmann::json& j, NoiseParams& p);

/// Moments of the clipped dark-current term D = max(0, n - N_d), n ~ Poisson(N_d).
struct DarkMoments {
    double mean = 0.0;
    double variance = 0.0;
};
DarkMoments dark_current_moments(double dark_mean);

/// Clipped dark current for one Poisson draw.
inline double dark_current(std::int64_t draw, double dark_mean)
{
    return std::max(0.0, static_cast<double>(draw) - dark_mean);
}

/// Noisy observation of a linear blurry image y_lin in [0,1].
TensorD simulate_noise(const TensorD& y_lin, const NoiseParams& params, std::uint64_t seed);

/// Per-pixel expectation of simulate_noise (quantization ignored).
TensorD expected_value(const TensorD& y_lin, const NoiseParams& params);
/// Per-pixel variance of simulate_noise with the streak gain folded in (quantization ignored).
TensorD noise_variance(const TensorD& y_lin, const NoiseParams& params);

/// min(factor * y, 1).
TensorD apply_saturation(const TensorD& y, double factor = 1.2);

struct DegradedPair {
    TensorD x;     // clean, [1,3,H,W]
    BlurKernel k;
    TensorD y_lin; // x * k, not clipped
    TensorD y;     // observation in [0,1]
    NoiseParams params;
    std::uint64_t seed = 0;
};

NoiseParams sample_noise_params(const SamplerConfig& sampler, std::uint64_t seed);

/// Blur, noise and saturation in sequence. Pure in (x, seed, sampler).
DegradedPair synthesize_pair(const TensorD& x, std::uint64_t seed, const SamplerConfig& sampler);

} // namespace infwide
