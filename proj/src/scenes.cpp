#include "infwide/scenes.hpp"

#include "infwide/random.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace infwide {

namespace {

using Colour = std::array<double, 3>;

void fill_rect(TensorD& img, double top, double left, double bottom, double right, const Colour& c)
{
    const Index H = img.dim(2), W = img.dim(3);
    const Index i0 = std::max<Index>(0, std::lround(top)), i1 = std::min<Index>(H, std::lround(bottom));
    const Index j0 = std::max<Index>(0, std::lround(left)), j1 = std::min<Index>(W, std::lround(right));
    for (Index ch = 0; ch < 3; ++ch)
        for (Index i = i0; i < i1; ++i)
            for (Index j = j0; j < j1; ++j) img.at(0, ch, i, j) = c[static_cast<std::size_t>(ch)];
}

void add_light(TensorD& img, double ci, double cj, double radius, const Colour& c)
{
    const Index H = img.dim(2), W = img.dim(3);
    const double reach = 4.0 * radius + 2.0;
    for (Index i = std::max<Index>(0, Index(ci - reach)); i < std::min<Index>(H, Index(ci + reach) + 1); ++i)
        for (Index j = std::max<Index>(0, Index(cj - reach)); j < std::min<Index>(W, Index(cj + reach) + 1); ++j) {
            const double d2 = ((i - ci) * (i - ci) + (j - cj) * (j - cj)) / (radius * radius);
            const double core = std::exp(-0.5 * d2), halo = 0.15 * std::exp(-0.125 * d2);
            for (Index ch = 0; ch < 3; ++ch) img.at(0, ch, i, j) += c[static_cast<std::size_t>(ch)] * (1.5 * core + halo);
        }
}

// Small separable Gaussian standing in for the optics.
TensorD soften(const TensorD& img, double sigma)
{
    const Index H = img.dim(2), W = img.dim(3), r = 2;
    std::array<double, 5> g{};
    double total = 0.0;
    for (Index d = -r; d <= r; ++d) total += g[static_cast<std::size_t>(d + r)] = std::exp(-0.5 * d * d / (sigma * sigma));
    for (auto& v : g) v /= total;
    TensorD tmp(img.shape()), out(img.shape());
    auto clampi = [](Index v, Index n) { return std::clamp<Index>(v, 0, n - 1); };
    for (Index c = 0; c < 3; ++c) {
        for (Index i = 0; i < H; ++i)
            for (Index j = 0; j < W; ++j) {
                double acc = 0.0;
                for (Index d = -r; d <= r; ++d) acc += g[static_cast<std::size_t>(d + r)] * img.at(0, c, i, clampi(j + d, W));
                tmp.at(0, c, i, j) = acc;
            }
        for (Index i = 0; i < H; ++i)
            for (Index j = 0; j < W; ++j) {
                double acc = 0.0;
                for (Index d = -r; d <= r; ++d) acc += g[static_cast<std::size_t>(d + r)] * tmp.at(0, c, clampi(i + d, H), j);
                out.at(0, c, i, j) = acc;
            }
    }
    return out;
}

} // namespace

TensorD render_scene(std::uint64_t seed, Index height, Index width)
{
    if (height < 8 || width < 8) throw ContractError("scene must be at least 8x8");
    Rng rng(seed);
    const double H = static_cast<double>(height), W = static_cast<double>(width);
    TensorD img(Shape{1, 3, height, width});

    // Sky: dark blue gradient with a faint glow near the horizon.
    const double horizon = H * rng.uniform(0.35, 0.6);
    const Colour sky{rng.uniform(0.02, 0.06), rng.uniform(0.03, 0.08), rng.uniform(0.08, 0.18)};
    for (Index i = 0; i < height; ++i) {
        const double t = std::clamp(i / horizon, 0.0, 1.0);
        for (Index c = 0; c < 3; ++c)
            for (Index j = 0; j < width; ++j)
                img.at(0, c, i, j) = sky[static_cast<std::size_t>(c)] * (0.6 + 0.8 * t) + (c == 0 ? 0.05 * t * t : 0.0);
    }

    // Facades with lit windows.
    const int buildings = 3 + static_cast<int>(rng.uniform_int(0, 4));
    for (int b = 0; b < buildings; ++b) {
        const double w = W * rng.uniform(0.15, 0.4), left = rng.uniform(-0.1 * W, W - 0.2 * w);
        const double top = horizon - H * rng.uniform(0.05, 0.45);
        const double tone = rng.uniform(0.06, 0.22);
        const Colour wall{tone, tone * rng.uniform(0.8, 1.0), tone * rng.uniform(0.7, 1.1)};
        fill_rect(img, top, left, H, left + w, wall);
        const double cell = std::max(3.0, W * rng.uniform(0.03, 0.06));
        const double lit = rng.uniform(0.2, 0.6);
        for (double wi = top + cell * 0.6; wi + cell * 0.5 < H; wi += cell)
            for (double wj = left + cell * 0.4; wj + cell * 0.5 < left + w; wj += cell) {
                if (rng.uniform() > lit) continue;
                const double glow = rng.uniform(0.45, 0.95);
                const Colour warm{glow, glow * rng.uniform(0.7, 0.9), glow * rng.uniform(0.35, 0.6)};
                fill_rect(img, wi, wj, wi + cell * 0.5, wj + cell * 0.55, warm);
            }
    }

    // Road with a smooth texture.
    const double road = H * rng.uniform(0.75, 0.9);
    const double fx = rng.uniform(0.1, 0.4), fy = rng.uniform(0.1, 0.4), phase = rng.uniform(0.0, 6.28);
    for (Index i = static_cast<Index>(road); i < height; ++i)
        for (Index j = 0; j < width; ++j) {
            const double v = 0.08 + 0.03 * std::sin(fx * j + fy * i + phase);
            for (Index c = 0; c < 3; ++c) img.at(0, c, i, j) = v * (c == 2 ? 0.9 : 1.0);
        }

    // Street lights and headlights saturate the sensor.
    const int lights = 2 + static_cast<int>(rng.uniform_int(0, 5));
    for (int l = 0; l < lights; ++l) {
        const double warmth = rng.uniform(0.0, 1.0);
        const Colour c{1.0, 0.85 + 0.15 * warmth, 0.55 + 0.45 * warmth};
        add_light(img, rng.uniform(0.1 * H, 0.95 * H), rng.uniform(0.0, W), rng.uniform(0.6, 2.0) * std::max(1.0, W / 64.0), c);
    }

    img = soften(img, 0.7);
    img.array() = img.array().min(1.0).max(0.0);
    return img;
}

} // namespace infwide
