#pragma once

#include <json.hpp>

#include <cstdint>
#include <optional>

namespace infwide {

struct Range {
    double lo = 0.0, hi = 0.0;
    [[nodiscard]] bool contains(double v) const { return v >= lo && v <= hi; }
};

/// Distributions for synthesizing degraded training and test pairs.
/// Defaults reproduce the uniform ranges used for training-set generation.
struct SamplerConfig {
    Range dark_mean{2.0, 8.0};     // N_d, electrons
    Range read_std{0.5, 4.0};      // sigma_r, electrons
    Range streak_std{0.01, 0.03};  // sigma_beta
    Range gain{4.0, 16.0};         // K; the attenuation M is set equal to K
    std::optional<double> fixed_gain; // evaluation mode with K pinned
    double full_scale = 500.0;     // Q, electrons at unit intensity
    double saturation = 1.2;
    bool channel_gain_jitter = false; // +-5% per-channel K
    bool quantize = false;            // 8-bit quantization after gain
    int kernel_min = 13;
    int kernel_max = 35;
    int patch = 256;
    int batch = 8;

    static SamplerConfig toy()
    {
        SamplerConfig c;
        c.patch = 64;
        return c;
    }

    void validate() const;
};

void to_json(nlohmann::json& j, const SamplerConfig& c);
void from_json(const nlohmann::json& j, SamplerConfig& c);

} // namespace infwide
