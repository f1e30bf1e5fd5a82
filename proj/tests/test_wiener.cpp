#include "helpers.hpp"

#include "infwide/degrade.hpp"
#include "infwide/metrics.hpp"
#include "infwide/scenes.hpp"
#include "infwide/wiener.hpp"

#include <doctest.h>

#include <numbers>

using namespace infwide;
using test::max_abs_diff;
using test::random_tensor;

namespace {

TensorD gaussian_field(std::uint64_t seed, Shape s, double sigma)
{
    Rng rng(seed);
    TensorD t(std::move(s));
    for (Index i = 0; i < t.size(); ++i) t[i] = sigma * rng.normal();
    return t;
}

// Direct DFT of a centred kernel on an H x W periodic grid.
std::complex<double> kernel_dft(const TensorD& k, Index H, Index W, Index u, Index v)
{
    const Index r = k.dim(0) / 2;
    std::complex<double> acc = 0.0;
    for (Index a = 0; a < k.dim(0); ++a)
        for (Index b = 0; b < k.dim(1); ++b) {
            const double phase = -2.0 * std::numbers::pi *
                                 (static_cast<double>((a - r) * u) / static_cast<double>(H) +
                                  static_cast<double>((b - r) * v) / static_cast<double>(W));
            acc += k.at(a, b) * std::polar(1.0, phase);
        }
    return acc;
}

double dot(const TensorD& a, const TensorD& b) { return (a.array() * b.array()).sum(); }

} // namespace

TEST_SUITE("wiener") {

TEST_CASE("NSR of a constant image clamps to the upper bound")
{
    const auto e = estimate_nsr(TensorD(Shape{1, 3, 16, 16}, 0.4));
    CHECK(e.signal_std < 1e-12);
    CHECK(e.noise_std < 1e-12);
    CHECK(e.nsr == kNsrMax);
    CHECK_THROWS_AS(estimate_nsr(TensorD()), ContractError);
}

TEST_CASE("noise std of an i.i.d. Gaussian field")
{
    const auto e = estimate_nsr(gaussian_field(3, Shape{1, 1, 256, 256}, 0.1));
    CHECK(std::abs(e.noise_std - 0.1 * std::sqrt(8.0 / 9.0)) <= 0.03 * 0.1 * std::sqrt(8.0 / 9.0));
    CHECK(e.nsr >= kNsrMin);
    CHECK(e.nsr <= kNsrMax);
}

TEST_CASE("noiseless scenes have a small NSR")
{
    for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
        const auto e = estimate_nsr(render_scene(seed, 512, 512));
        INFO("seed " << seed << " nsr " << e.nsr);
        CHECK(e.nsr < 1e-2);
    }
}

TEST_CASE("delta kernel with zero NSR is the identity")
{
    const TensorD y = random_tensor(4, Shape{2, 3, 16, 20});
    TensorD delta(Shape{5, 5});
    delta.at(2, 2) = 1.0;
    CHECK(max_abs_diff(wiener_deconvolve(y, delta, 0.0), y) <= 1e-10);
}

TEST_CASE("near-exact inverse of a noiseless circular blur")
{
    const TensorD x = random_tensor(5, Shape{1, 3, 64, 64});
    for (std::uint64_t seed : {6, 7, 8}) {
        const BlurKernel k = generate_kernel(seed, 13, 13);
        const TensorD y = convolve(x, k);
        const double db = psnr(wiener_deconvolve(y, k.values, 1e-8), x);
        INFO("kernel seed " << seed << " psnr " << db);
        CHECK(db >= 60.0);
    }
}

TEST_CASE("linearity at fixed NSR")
{
    const TensorD y1 = random_tensor(9, Shape{1, 3, 32, 32}), y2 = random_tensor(10, Shape{1, 3, 32, 32});
    const BlurKernel k = generate_kernel(11, 15, 15);
    const TensorD lhs = wiener_deconvolve(TensorD(y1.shape(), 2.0 * y1.array() + 3.0 * y2.array()), k.values, 0.01);
    const TensorD rhs(y1.shape(), 2.0 * wiener_deconvolve(y1, k.values, 0.01).array() +
                                      3.0 * wiener_deconvolve(y2, k.values, 0.01).array());
    CHECK(max_abs_diff(lhs, rhs) <= 1e-9);
}

TEST_CASE("filter matches conj(F) / (|F|^2 + nsr) from a direct DFT")
{
    const BlurKernel k = generate_kernel(12, 13, 13);
    const Index H = 24, W = 20;
    for (double nsr : {0.0, 1e-4, 0.3}) {
        const auto f = WienerFilter<double>::build(k.values, H, W, nsr);
        double spectrum_err = 0.0, identity_err = 0.0;
        for (Index u = 0; u < H; ++u)
            for (Index v = 0; v < W; ++v) {
                const auto F = f.spectrum[u * W + v];
                spectrum_err = std::max(spectrum_err, std::abs(F - kernel_dft(k.values, H, W, u, v)));
                if (nsr == 0.0 && std::norm(F) == 0.0) continue;
                const auto G = std::conj(F) / (std::norm(F) + nsr);
                identity_err = std::max(identity_err, std::abs(f.gain[u * W + v] - G) / std::abs(G));
            }
        CHECK(spectrum_err <= 1e-12);
        CHECK(identity_err <= 1e-12);
    }
    CHECK_THROWS_AS(WienerFilter<double>::build(k.values, H, W, -1.0), ContractError);
}

TEST_CASE("adjoint identity <W y, z> == <y, W^T z>")
{
    const TensorD y = random_tensor(13, Shape{2, 3, 24, 32}, -1, 1), z = random_tensor(14, y.shape(), -1, 1);
    const std::vector<TensorD> ks{generate_kernel(15, 13, 13).values, generate_kernel(16, 17, 17).values};
    for (const auto& nsr : {std::vector<double>{0.01, 0.2}, std::vector<double>{0.01, 0.02, 0.03, 0.2, 0.1, 1e-4}}) {
        auto yv = Var<double>::parameter(y);
        const auto wy = wiener_deconvolve(yv, std::span<const TensorD>(ks), std::span<const double>(nsr));
        backward(sum(wy * Var<double>::constant(z)));
        CHECK(std::abs(dot(wy.value(), z) - dot(y, yv.grad())) <= 1e-8);
    }
    const std::vector<double> one{0.1};
    CHECK_THROWS_AS(wiener_deconvolve(Var<double>::constant(y), std::span<const TensorD>(ks), std::span<const double>(one)),
                    DimensionError);
}

TEST_CASE("deconvolve after convolve never amplifies")
{
    const BlurKernel k = generate_kernel(17, 21, 21);
    const Index H = 32, W = 32;
    for (double nsr : {1e-8, 1e-3, 0.5}) {
        const auto f = WienerFilter<double>::build(k.values, H, W, nsr);
        const auto composite = (f.gain.array() * f.spectrum.array()).eval();
        CHECK(composite.imag().abs().maxCoeff() <= 1e-12);
        CHECK(composite.real().minCoeff() >= 0.0);
        CHECK(composite.real().maxCoeff() <= 1.0 + 1e-12);
    }
    const TensorD x = random_tensor(18, Shape{1, 3, H, W}, -1, 1);
    const TensorD back = wiener_deconvolve(convolve(x, k), k.values, 1e-3);
    CHECK(back.array().square().sum() <= x.array().square().sum() * (1 + 1e-12));
}

TEST_CASE("raising the NSR never raises |G|")
{
    const BlurKernel k = generate_kernel(19, 13, 13);
    Eigen::ArrayXd prev;
    for (double nsr : {1e-8, 1e-6, 1e-4, 1e-2, 1.0, 100.0}) {
        const Eigen::ArrayXd mag = WienerFilter<double>::build(k.values, 16, 16, nsr).gain.array().abs();
        if (prev.size()) CHECK((mag <= prev + 1e-15).all());
        prev = mag;
    }
}

TEST_CASE("kernel larger than the image is rejected")
{
    const BlurKernel k = generate_kernel(20, 21, 21);
    CHECK_THROWS_AS(wiener_deconvolve(TensorD(Shape{1, 3, 16, 16}), k.values, 0.1), ContractError);
}

TEST_CASE("noise level map")
{
    const TensorD flat(Shape{1, 3, 20, 24}, 0.3);
    const TensorD m = estimate_noise_map(flat);
    CHECK(m.shape() == Shape{1, 1, 20, 24});
    CHECK(m.array().abs().maxCoeff() <= 1e-15);

    // Oracle: sample mean of |n_0 - mean of a 3x3 window| over independent Gaussian windows.
    Rng rng(21);
    double acc = 0.0;
    const int trials = 200000;
    for (int t = 0; t < trials; ++t) {
        double w[9], s = 0.0;
        for (double& v : w) s += (v = 0.1 * rng.normal());
        acc += std::abs(w[4] - s / 9.0);
    }
    const double oracle = acc / trials;
    CHECK(std::abs(oracle - 0.1 * std::sqrt(8.0 / 9.0) * std::sqrt(2.0 / std::numbers::pi)) <= 0.01 * oracle);
    const TensorD noisy = gaussian_field(22, Shape{1, 1, 128, 128}, 0.1);
    const double mapped = estimate_noise_map(noisy).array().mean();
    CHECK(std::abs(mapped - oracle) <= 0.15 * oracle);
    CHECK(estimate_noise_map(TensorD(Shape{2, 3, 8, 8})).shape() == Shape{2, 1, 8, 8});
}

} // TEST_SUITE
