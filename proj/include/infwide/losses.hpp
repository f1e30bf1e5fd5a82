#pragma once

// Training objective: multi-scale deblurring loss, enhancement loss on the
// non-clipped blurry target, and the reblurring loss through the known kernel.

#include "infwide/fft.hpp"
#include "infwide/metrics.hpp"
#include "infwide/resample.hpp"

#include <array>

namespace infwide {

enum class L2Mode { squared, root };

struct LossWeights {
    double deblur = 1.0;
    double enhance = 0.5;
    double reblur = 0.5;
    std::array<double, 4> deblur_terms{0.4, 0.2, 0.2, 0.2}; // l1, l2, tv, ssim
    std::array<double, 3> enhance_terms{0.5, 0.3, 0.2};     // l1, l2, tv
    L2Mode l2 = L2Mode::squared;

    void validate() const
    {
        bool ok = deblur >= 0 && enhance >= 0 && reblur >= 0;
        for (double w : deblur_terms) ok = ok && w >= 0;
        for (double w : enhance_terms) ok = ok && w >= 0;
        if (!ok) throw ContractError("loss weights must be nonnegative");
    }
};

template <typename Scalar>
Var<Scalar> l1_loss(const Var<Scalar>& a, const Var<Scalar>& b)
{
    if (a.shape() != b.shape()) throw DimensionError("l1_loss: " + a.shape().str() + " vs " + b.shape().str());
    return mean(abs(a - b));
}

template <typename Scalar>
Var<Scalar> l2_loss(const Var<Scalar>& a, const Var<Scalar>& b, L2Mode mode = L2Mode::squared)
{
    if (a.shape() != b.shape()) throw DimensionError("l2_loss: " + a.shape().str() + " vs " + b.shape().str());
    auto m = mean(square(a - b));
    if (mode == L2Mode::squared) return m;
    // The offset keeps the gradient finite at zero error.
    return sqrt(add_scalar(m, Scalar(1e-12)));
}

/// Anisotropic total variation: mean of |forward differences| over every
/// horizontal and vertical neighbour pair.
template <typename Scalar>
Var<Scalar> tv(const Var<Scalar>& x)
{
    require_rank(x.shape(), 4, "tv");
    const Index P = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
    const Index count = P * (H * (W - 1) + (H - 1) * W);
    if (count == 0) return scalar_mul(sum(x), Scalar(0));
    const Scalar* v = x.value().data();
    double acc = 0.0;
    for (Index p = 0; p < P; ++p)
        for (Index i = 0; i < H; ++i)
            for (Index j = 0; j < W; ++j) {
                const Scalar c = v[(p * H + i) * W + j];
                if (j + 1 < W) acc += std::abs(v[(p * H + i) * W + j + 1] - c);
                if (i + 1 < H) acc += std::abs(v[(p * H + i + 1) * W + j] - c);
            }
    const auto n = static_cast<Scalar>(count);
    Tensor<Scalar> out(Shape{1}, static_cast<Scalar>(acc) / n);
    auto xn = x.node();
    return record<Scalar>("tv", std::move(out), {x}, [xn, P, H, W, n](Node<Scalar>& self) {
        if (!xn->requires_grad) return;
        const Scalar g = self.grad[0] / n;
        const Scalar* v = xn->value.data();
        Scalar* gx = xn->grad_buffer().data();
        auto sgn = [](Scalar d) { return Scalar((d > 0) - (d < 0)); };
        for (Index p = 0; p < P; ++p)
            for (Index i = 0; i < H; ++i)
                for (Index j = 0; j < W; ++j) {
                    const Index at = (p * H + i) * W + j;
                    if (j + 1 < W) {
                        const Scalar s = sgn(v[at + 1] - v[at]) * g;
                        gx[at + 1] += s;
                        gx[at] -= s;
                    }
                    if (i + 1 < H) {
                        const Scalar s = sgn(v[at + W] - v[at]) * g;
                        gx[at + W] += s;
                        gx[at] -= s;
                    }
                }
    });
}

/// 1 - SSIM(x_hat, x). Images narrower than 11 pixels use a shrunken window.
template <typename Scalar>
Var<Scalar> ssim_loss(const Var<Scalar>& x_hat, const Var<Scalar>& x)
{
    const auto o = SsimOptions::fitted(std::min(x.dim(2), x.dim(3)));
    return add_scalar(scalar_mul(ssim(x_hat, x, o), Scalar(-1)), Scalar(1));
}

/// Ground truth at every scale: scale 0 is x, each further scale a bicubic x0.5 of the previous.
template <typename Scalar>
std::vector<Var<Scalar>> ground_truth_pyramid(const Var<Scalar>& x, std::size_t scales)
{
    std::vector<Var<Scalar>> out{x};
    for (std::size_t l = 1; l < scales; ++l) out.push_back(resample(out.back(), 0.5, Interpolation::bicubic));
    return out;
}

/// Multi-scale deblurring loss; outputs[0] is the full-resolution estimate.
template <typename Scalar>
Var<Scalar> deblur_loss(std::span<const Var<Scalar>> outputs, std::span<const Var<Scalar>> truth,
                        const LossWeights& w = {})
{
    if (outputs.empty() || outputs.size() != truth.size())
        throw DimensionError("deblur_loss: " + std::to_string(outputs.size()) + " outputs for " +
                             std::to_string(truth.size()) + " ground-truth scales");
    const auto& g = w.deblur_terms;
    Var<Scalar> total;
    for (std::size_t l = 0; l < outputs.size(); ++l) {
        const auto& xh = outputs[l];
        const auto& xt = truth[l];
        auto term = scalar_mul(l1_loss(xh, xt), Scalar(g[0])) + scalar_mul(l2_loss(xh, xt, w.l2), Scalar(g[1])) +
                    scalar_mul(tv(xh), Scalar(g[2])) + scalar_mul(ssim_loss(xh, xt), Scalar(g[3]));
        total = total.defined() ? total + term : term;
    }
    return scalar_mul(total, Scalar(1.0 / static_cast<double>(outputs.size())));
}

template <typename Scalar>
Var<Scalar> deblur_loss(std::span<const Var<Scalar>> outputs, const Var<Scalar>& x, const LossWeights& w = {})
{
    const auto truth = ground_truth_pyramid(x, outputs.size());
    return deblur_loss<Scalar>(outputs, std::span<const Var<Scalar>>(truth), w);
}

/// Enhancement loss against the non-clipped blurry image x * k.
template <typename Scalar>
Var<Scalar> enhance_loss(const Var<Scalar>& y_hat, const Var<Scalar>& blurred_truth, const LossWeights& w = {})
{
    const auto& g = w.enhance_terms;
    return scalar_mul(l1_loss(y_hat, blurred_truth), Scalar(g[0])) +
           scalar_mul(l2_loss(y_hat, blurred_truth, w.l2), Scalar(g[1])) + scalar_mul(tv(y_hat), Scalar(g[2]));
}

template <typename Scalar>
Var<Scalar> enhance_loss(const Var<Scalar>& y_hat, const Var<Scalar>& x, std::span<const Tensor<Scalar>> kernels,
                         const LossWeights& w = {})
{
    Var<Scalar> target;
    {
        NoGradGuard guard;
        target = Var<Scalar>::constant(circular_convolve(x, kernels).value());
    }
    return enhance_loss(y_hat, target, w);
}

/// L1 distance between x_hat * k and the blurry target x * k.
template <typename Scalar>
Var<Scalar> reblur_loss(const Var<Scalar>& x_hat, const Var<Scalar>& blurred_truth,
                        std::span<const Tensor<Scalar>> kernels)
{
    if (x_hat.shape() != blurred_truth.shape())
        throw DimensionError("reblur_loss: " + x_hat.shape().str() + " vs " + blurred_truth.shape().str());
    return l1_loss(circular_convolve(x_hat, kernels), blurred_truth);
}

struct LossParts {
    double deblur = 0.0, enhance = 0.0, reblur = 0.0, total = 0.0;
};

/// deblur + 0.5 enhance + 0.5 reblur; undefined parts are dropped.
template <typename Scalar>
Var<Scalar> total_loss(const Var<Scalar>& deblur, const Var<Scalar>& enhance, const Var<Scalar>& reblur,
                       const LossWeights& w = {})
{
    Var<Scalar> total = scalar_mul(deblur, Scalar(w.deblur));
    if (enhance.defined() && w.enhance != 0.0) total = total + scalar_mul(enhance, Scalar(w.enhance));
    if (reblur.defined() && w.reblur != 0.0) total = total + scalar_mul(reblur, Scalar(w.reblur));
    return total;
}

} // namespace infwide
