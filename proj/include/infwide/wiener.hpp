#pragma once

// Image- and feature-space Wiener deconvolution with noise-to-signal estimation.

#include "infwide/fft.hpp"

#include <cmath>

namespace infwide {

inline constexpr double kNsrMin = 1e-8;
inline constexpr double kNsrMax = 1e2;
inline constexpr double kSignalVarianceFloor = 1e-12;

/// Mean filter of odd window size over each H x W plane, symmetric boundary.
template <typename Scalar>
Tensor<Scalar> box_filter(const Tensor<Scalar>& x, Index window)
{
    require_rank(x.shape(), 4, "box_filter");
    const Index H = x.dim(2), W = x.dim(3), r = window / 2;
    Tensor<Scalar> out(x.shape()), tmp(x.shape());
    const Scalar inv = Scalar(1) / static_cast<Scalar>(window);
    for (Index p = 0; p < x.dim(0) * x.dim(1); ++p) {
        const Scalar* in = x.data() + p * H * W;
        Scalar* t = tmp.data() + p * H * W;
        Scalar* o = out.data() + p * H * W;
        for (Index i = 0; i < H; ++i)
            for (Index j = 0; j < W; ++j) {
                Scalar acc = 0;
                for (Index d = -r; d <= r; ++d) acc += in[i * W + detail::mirror(j + d, W)];
                t[i * W + j] = acc * inv;
            }
        for (Index i = 0; i < H; ++i)
            for (Index j = 0; j < W; ++j) {
                Scalar acc = 0;
                for (Index d = -r; d <= r; ++d) acc += t[detail::mirror(i + d, H) * W + j];
                o[i * W + j] = acc * inv;
            }
    }
    return out;
}

struct NsrEstimate {
    double signal_std = 0.0;
    double noise_std = 0.0;
    double nsr = kNsrMax;
};

/// Global noise-to-signal ratio of one image (all channels pooled).
/// sigma_s is the std of y, sigma_n the std of y minus its 3x3 mean.
template <typename Scalar>
NsrEstimate estimate_nsr(const Tensor<Scalar>& y)
{
    if (y.empty()) throw ContractError("estimate_nsr on empty image");
    const Tensor<Scalar> yy = y.rank() == 4 ? y : y.reshaped(Shape{1, 1, y.shape().back(1), y.shape().back(0)});
    auto std_of = [](const auto& a) {
        const auto v = a.template cast<double>();
        const double m = v.mean();
        return std::sqrt((v - m).square().mean());
    };
    NsrEstimate e;
    e.signal_std = std_of(yy.array());
    e.noise_std = std_of((yy.array() - box_filter(yy, 3).array()).eval());
    const double s2 = e.signal_std * e.signal_std;
    // No measurable signal: regularize as hard as allowed.
    e.nsr = s2 < kSignalVarianceFloor ? kNsrMax
                                      : std::clamp(e.noise_std * e.noise_std / s2, kNsrMin, kNsrMax);
    return e;
}

/// One NSR per batch item of a [B,C,H,W] tensor.
template <typename Scalar>
std::vector<double> estimate_nsr_batch(const Tensor<Scalar>& y)
{
    require_rank(y.shape(), 4, "estimate_nsr_batch");
    const Index per = y.size() / y.dim(0);
    std::vector<double> out;
    for (Index n = 0; n < y.dim(0); ++n)
        out.push_back(estimate_nsr(Tensor<Scalar>(Shape{1, y.dim(1), y.dim(2), y.dim(3)},
                                                  y.array().segment(n * per, per)))
                          .nsr);
    return out;
}

/// G = conj(F(k)) / (|F(k)|^2 + nsr) on an H x W periodic grid.
template <typename Scalar>
struct WienerFilter {
    ComplexTensor<Scalar> gain;     // G
    ComplexTensor<Scalar> spectrum; // F(k)
    double nsr = 0.0;

    static WienerFilter build(const Tensor<Scalar>& kernel, Index H, Index W, double nsr)
    {
        if (!(nsr >= 0.0)) throw ContractError("Wiener filter needs nsr >= 0");
        WienerFilter f;
        f.nsr = nsr;
        f.spectrum = kernel_spectrum(kernel, H, W);
        f.gain = ComplexTensor<Scalar>(f.spectrum.shape());
        const auto& F = f.spectrum.array();
        f.gain.array() = F.conjugate() / (F.abs2() + static_cast<Scalar>(nsr));
        return f;
    }
};

/// Per-channel Wiener deconvolution; sample n uses kernels[n]. `nsr` holds one value
/// per sample, or one per (sample, channel) plane. Linear in y with the NSR held
/// constant; the adjoint applies conj(G).
template <typename Scalar>
Var<Scalar> wiener_deconvolve(const Var<Scalar>& y, std::span<const Tensor<Scalar>> kernels, std::span<const double> nsr)
{
    require_rank(y.shape(), 4, "wiener_deconvolve");
    const Index B = y.dim(0), C = y.dim(1);
    const auto count = static_cast<Index>(nsr.size());
    if (static_cast<Index>(kernels.size()) != B || (count != B && count != B * C))
        throw DimensionError("wiener_deconvolve: need one kernel and nsr per batch item of " + y.shape().str());
    const Index per = count / B;
    std::vector<ComplexTensor<Scalar>> gains;
    for (Index n = 0; n < B; ++n) {
        const auto spectrum = kernel_spectrum(kernels[static_cast<std::size_t>(n)], y.dim(2), y.dim(3));
        for (Index c = 0; c < per; ++c) {
            const double v = nsr[static_cast<std::size_t>(n * per + c)];
            if (!(v >= 0.0)) throw ContractError("Wiener filter needs nsr >= 0");
            ComplexTensor<Scalar> g(spectrum.shape());
            g.array() = spectrum.array().conjugate() / (spectrum.array().abs2() + static_cast<Scalar>(v));
            gains.push_back(std::move(g));
        }
    }
    return spectral_filter(y, std::move(gains));
}

template <typename Scalar>
Tensor<Scalar> wiener_deconvolve(const Tensor<Scalar>& y, const Tensor<Scalar>& kernel, double nsr)
{
    NoGradGuard guard;
    std::vector<Tensor<Scalar>> ks(static_cast<std::size_t>(y.dim(0)), kernel);
    std::vector<double> ns(static_cast<std::size_t>(y.dim(0)), nsr);
    return wiener_deconvolve(Var<Scalar>::constant(y), std::span<const Tensor<Scalar>>(ks), std::span<const double>(ns))
        .value();
}

/// Single-channel noise level map: channel-averaged |y - mean3x3(y)| smoothed by a 7x7 box.
template <typename Scalar>
Tensor<Scalar> estimate_noise_map(const Tensor<Scalar>& y)
{
    require_rank(y.shape(), 4, "estimate_noise_map");
    if (y.empty()) throw ContractError("estimate_noise_map on empty image");
    const Index B = y.dim(0), C = y.dim(1), plane = y.dim(2) * y.dim(3);
    const Tensor<Scalar> residual(y.shape(), (y.array() - box_filter(y, 3).array()).abs());
    Tensor<Scalar> avg(Shape{B, 1, y.dim(2), y.dim(3)});
    for (Index n = 0; n < B; ++n) {
        auto dst = avg.array().segment(n * plane, plane);
        for (Index c = 0; c < C; ++c) dst += residual.array().segment((n * C + c) * plane, plane);
        dst /= static_cast<Scalar>(C);
    }
    return box_filter(avg, 7);
}

} // namespace infwide
