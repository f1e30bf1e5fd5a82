#pragma once

#include "infwide/ops.hpp"

#include <Eigen/Dense>

namespace infwide {

enum class Interpolation { bicubic, bilinear };

namespace detail {

inline double cubic_weight(double t)
{
    // Keys kernel with a = -0.5.
    const double x = std::abs(t);
    if (x <= 1.0) return 1.5 * x * x * x - 2.5 * x * x + 1.0;
    if (x < 2.0) return -0.5 * x * x * x + 2.5 * x * x - 4.0 * x + 2.0;
    return 0.0;
}

inline double linear_weight(double t)
{
    const double x = std::abs(t);
    return x < 1.0 ? 1.0 - x : 0.0;
}

} // namespace detail

/// Row-stochastic 1-D resampling matrix (out x in). Downscaling widens the kernel by
/// 1/scale (antialiased); boundaries use symmetric extension.
template <typename Scalar>
RowMatrix<Scalar> resample_matrix(Index in, double scale, Interpolation kind)
{
    const Index out = static_cast<Index>(std::lround(scale * static_cast<double>(in)));
    if (out < 1) throw DimensionError("resample to empty extent");
    const double s = std::min(scale, 1.0);
    const double support = (kind == Interpolation::bicubic ? 2.0 : 1.0) / s;
    RowMatrix<double> m = RowMatrix<double>::Zero(out, in);
    for (Index j = 0; j < out; ++j) {
        const double centre = (static_cast<double>(j) + 0.5) / scale - 0.5;
        const Index lo = static_cast<Index>(std::floor(centre - support)), hi = static_cast<Index>(std::ceil(centre + support));
        for (Index i = lo; i <= hi; ++i) {
            const double t = (centre - static_cast<double>(i)) * s;
            const double w = kind == Interpolation::bicubic ? detail::cubic_weight(t) : detail::linear_weight(t);
            if (w != 0.0) m(j, detail::mirror(i, in)) += w;
        }
        m.row(j) /= m.row(j).sum();
    }
    return m.cast<Scalar>();
}

/// Separable resampling of the spatial axes by `scale` in {0.5, 2}.
template <typename Scalar>
Var<Scalar> resample(const Var<Scalar>& x, double scale, Interpolation kind = Interpolation::bicubic)
{
    require_rank(x.shape(), 4, "resample");
    if (scale != 0.5 && scale != 2.0) throw ContractError("resample: scale must be 0.5 or 2");
    const Index H = x.dim(2), W = x.dim(3);
    if (scale == 0.5 && (H % 2 != 0 || W % 2 != 0))
        throw DimensionError("resample: downscaling needs even extents, got " + x.shape().str());
    const RowMatrix<Scalar> ry = resample_matrix<Scalar>(H, scale, kind);
    const RowMatrix<Scalar> rx = resample_matrix<Scalar>(W, scale, kind);
    const Index Ho = ry.rows(), Wo = rx.rows(), planes = x.dim(0) * x.dim(1);
    Tensor<Scalar> out(Shape{x.dim(0), x.dim(1), Ho, Wo});
    using CMap = Eigen::Map<const RowMatrix<Scalar>>;
    for (Index p = 0; p < planes; ++p)
        Eigen::Map<RowMatrix<Scalar>>(out.data() + p * Ho * Wo, Ho, Wo).noalias() =
            ry * CMap(x.value().data() + p * H * W, H, W) * rx.transpose();
    auto xn = x.node();
    return record<Scalar>("resample", std::move(out), {x}, [xn, ry, rx, planes, H, W, Ho, Wo](Node<Scalar>& self) {
        if (!xn->requires_grad) return;
        auto& g = xn->grad_buffer();
        for (Index p = 0; p < planes; ++p)
            Eigen::Map<RowMatrix<Scalar>>(g.data() + p * H * W, H, W).noalias() +=
                ry.transpose() * CMap(self.grad.data() + p * Ho * Wo, Ho, Wo) * rx;
    });
}

template <typename Scalar>
Tensor<Scalar> resample(const Tensor<Scalar>& x, double scale, Interpolation kind = Interpolation::bicubic)
{
    NoGradGuard guard;
    return resample(Var<Scalar>::constant(x), scale, kind).value();
}

} // namespace infwide
