#pragma once

#include "infwide/ops.hpp"

#include <cmath>
#include <limits>

namespace infwide {

/// PSNR in dB; +infinity when the images are identical.
template <typename Scalar>
double psnr(const Tensor<Scalar>& a, const Tensor<Scalar>& b, double peak = 1.0)
{
    if (a.shape() != b.shape()) throw DimensionError("psnr: " + a.shape().str() + " vs " + b.shape().str());
    if (!(peak > 0.0)) throw ContractError("psnr: peak must be positive");
    const double mse = (a.array().template cast<double>() - b.array().template cast<double>()).square().mean();
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

/// Value used for identical images in reports.
inline constexpr double kPsnrReportCap = 100.0;

inline double capped_psnr(double db) { return std::min(db, kPsnrReportCap); }

struct SsimOptions {
    Index window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double range = 1.0;

    /// Standard settings, with the window shrunk to the largest odd size that fits
    /// `extent` (sigma scaled with it) when the image is smaller than 11 pixels.
    static SsimOptions fitted(Index extent)
    {
        SsimOptions o;
        if (extent < o.window) {
            o.window = extent % 2 == 1 ? extent : extent - 1;
            o.sigma = 1.5 * static_cast<double>(o.window) / 11.0;
        }
        return o;
    }
};

template <typename Scalar>
Tensor<Scalar> gaussian_window_1d(const SsimOptions& o)
{
    Tensor<Scalar> g(Shape{o.window});
    const Index r = o.window / 2;
    double total = 0.0;
    for (Index i = 0; i < o.window; ++i) total += std::exp(-0.5 * double((i - r) * (i - r)) / (o.sigma * o.sigma));
    for (Index i = 0; i < o.window; ++i)
        g[i] = static_cast<Scalar>(std::exp(-0.5 * double((i - r) * (i - r)) / (o.sigma * o.sigma)) / total);
    return g;
}

/// Mean SSIM over the valid region, channels and batch. Differentiable in both inputs.
template <typename Scalar>
Var<Scalar> ssim(const Var<Scalar>& a, const Var<Scalar>& b, const SsimOptions& o)
{
    if (a.shape() != b.shape()) throw DimensionError("ssim: " + a.shape().str() + " vs " + b.shape().str());
    require_rank(a.shape(), 4, "ssim");
    const Index H = a.dim(2), W = a.dim(3);
    if (H < o.window || W < o.window)
        throw DimensionError("ssim: image " + a.shape().str() + " smaller than the " + std::to_string(o.window) +
                             "x" + std::to_string(o.window) + " window");
    const Tensor<Scalar> g = gaussian_window_1d<Scalar>(o);
    const auto wh = Var<Scalar>::constant(g.reshaped(Shape{1, 1, 1, o.window}));
    const auto wv = Var<Scalar>::constant(g.reshaped(Shape{1, 1, o.window, 1}));
    const Shape planes{a.dim(0) * a.dim(1), 1, H, W};
    auto blur = [&](const Var<Scalar>& x) { return conv2d(conv2d(x, wh), wv); };
    const auto x = reshape(a, planes), y = reshape(b, planes);
    const auto c1 = static_cast<Scalar>((o.k1 * o.range) * (o.k1 * o.range));
    const auto c2 = static_cast<Scalar>((o.k2 * o.range) * (o.k2 * o.range));

    const auto mu_x = blur(x), mu_y = blur(y);
    const auto mu_xx = square(mu_x), mu_yy = square(mu_y), mu_xy = mu_x * mu_y;
    const auto var_x = blur(square(x)) - mu_xx;
    const auto var_y = blur(square(y)) - mu_yy;
    const auto cov = blur(x * y) - mu_xy;
    const auto num = add_scalar(Scalar(2) * mu_xy, c1) * add_scalar(Scalar(2) * cov, c2);
    const auto den = add_scalar(mu_xx + mu_yy, c1) * add_scalar(var_x + var_y, c2);
    return mean(div(num, den));
}

/// Standard single-scale SSIM (11x11 Gaussian, sigma 1.5, K1 0.01, K2 0.03, range 1).
template <typename Scalar>
double ssim(const Tensor<Scalar>& a, const Tensor<Scalar>& b)
{
    NoGradGuard guard;
    const Tensor<double> ad = a.template cast<double>(), bd = b.template cast<double>();
    return ssim(Var<double>::constant(ad), Var<double>::constant(bd), SsimOptions{}).item();
}

} // namespace infwide
