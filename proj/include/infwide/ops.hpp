#pragma once

// Differentiable tensor operations. Every function records its adjoint on the
// graph when an input requires a gradient.

#include "infwide/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <span>

namespace infwide {

namespace detail {

template <typename Scalar>
void accumulate(const std::shared_ptr<Node<Scalar>>& n, const Tensor<Scalar>& g)
{
    if (!n->requires_grad) return;
    n->grad_buffer().array() += g.array();
}

template <typename Scalar, typename Expr>
void accumulate_expr(const std::shared_ptr<Node<Scalar>>& n, const Expr& e)
{
    if (!n->requires_grad) return;
    n->grad_buffer().array() += e;
}

/// Index maps for numpy-style broadcasting of two shapes.
struct Broadcast {
    Shape out;
    std::vector<Index> a_index, b_index; // empty when the operand is not broadcast
};

inline Broadcast broadcast(const Shape& a, const Shape& b)
{
    Broadcast r;
    if (a == b) {
        r.out = a;
        return r;
    }
    const Index rank = std::max(a.rank(), b.rank());
    std::vector<Index> da(static_cast<std::size_t>(rank), 1), db(static_cast<std::size_t>(rank), 1);
    for (Index i = 0; i < a.rank(); ++i) da[static_cast<std::size_t>(rank - a.rank() + i)] = a[i];
    for (Index i = 0; i < b.rank(); ++i) db[static_cast<std::size_t>(rank - b.rank() + i)] = b[i];
    std::vector<Index> out(static_cast<std::size_t>(rank));
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (da[i] != db[i] && da[i] != 1 && db[i] != 1)
            throw DimensionError("shapes " + a.str() + " and " + b.str() + " are not broadcast-compatible");
        out[i] = std::max(da[i], db[i]);
    }
    r.out = Shape(out);
    const Index total = r.out.numel();
    auto build = [&](const std::vector<Index>& d, bool same) {
        std::vector<Index> idx;
        if (same) return idx;
        idx.resize(static_cast<std::size_t>(total));
        std::vector<Index> coord(static_cast<std::size_t>(rank), 0);
        for (Index flat = 0; flat < total; ++flat) {
            Index off = 0;
            for (std::size_t k = 0; k < coord.size(); ++k) off = off * d[k] + (d[k] == 1 ? 0 : coord[k]);
            idx[static_cast<std::size_t>(flat)] = off;
            for (Index k = rank - 1; k >= 0; --k) {
                auto& c = coord[static_cast<std::size_t>(k)];
                if (++c < out[static_cast<std::size_t>(k)]) break;
                c = 0;
            }
        }
        return idx;
    };
    r.a_index = build(da, a == r.out);
    r.b_index = build(db, b == r.out);
    return r;
}

template <typename Scalar>
Tensor<Scalar> gather(const Tensor<Scalar>& t, const std::vector<Index>& idx, const Shape& out)
{
    if (idx.empty()) return t;
    Tensor<Scalar> r(out);
    for (Index i = 0; i < r.size(); ++i) r[i] = t[idx[static_cast<std::size_t>(i)]];
    return r;
}

template <typename Scalar>
void scatter_add(const std::shared_ptr<Node<Scalar>>& n, const Tensor<Scalar>& g, const std::vector<Index>& idx)
{
    if (!n->requires_grad) return;
    if (idx.empty()) {
        n->grad_buffer().array() += g.array();
        return;
    }
    auto& buf = n->grad_buffer();
    for (Index i = 0; i < g.size(); ++i) buf[idx[static_cast<std::size_t>(i)]] += g[i];
}

} // namespace detail

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b)
{
    auto bc = detail::broadcast(a.shape(), b.shape());
    Tensor<Scalar> out(bc.out);
    out.array() = detail::gather(a.value(), bc.a_index, bc.out).array() +
                  detail::gather(b.value(), bc.b_index, bc.out).array();
    auto an = a.node(), bn = b.node();
    return record<Scalar>("add", std::move(out), {a, b}, [an, bn, bc](Node<Scalar>& self) {
        detail::scatter_add(an, self.grad, bc.a_index);
        detail::scatter_add(bn, self.grad, bc.b_index);
    });
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b)
{
    auto bc = detail::broadcast(a.shape(), b.shape());
    Tensor<Scalar> out(bc.out);
    out.array() = detail::gather(a.value(), bc.a_index, bc.out).array() -
                  detail::gather(b.value(), bc.b_index, bc.out).array();
    auto an = a.node(), bn = b.node();
    return record<Scalar>("sub", std::move(out), {a, b}, [an, bn, bc](Node<Scalar>& self) {
        detail::scatter_add(an, self.grad, bc.a_index);
        Tensor<Scalar> neg(self.grad.shape(), -self.grad.array());
        detail::scatter_add(bn, neg, bc.b_index);
    });
}

template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b)
{
    auto bc = detail::broadcast(a.shape(), b.shape());
    Tensor<Scalar> av = detail::gather(a.value(), bc.a_index, bc.out);
    Tensor<Scalar> bv = detail::gather(b.value(), bc.b_index, bc.out);
    Tensor<Scalar> out(bc.out, av.array() * bv.array());
    auto an = a.node(), bn = b.node();
    return record<Scalar>("mul", std::move(out), {a, b}, [an, bn, bc, av, bv](Node<Scalar>& self) {
        if (an->requires_grad)
            detail::scatter_add(an, Tensor<Scalar>(self.grad.shape(), self.grad.array() * bv.array()), bc.a_index);
        if (bn->requires_grad)
            detail::scatter_add(bn, Tensor<Scalar>(self.grad.shape(), self.grad.array() * av.array()), bc.b_index);
    });
}

template <typename Scalar>
Var<Scalar> div(const Var<Scalar>& a, const Var<Scalar>& b)
{
    auto bc = detail::broadcast(a.shape(), b.shape());
    Tensor<Scalar> av = detail::gather(a.value(), bc.a_index, bc.out);
    Tensor<Scalar> bv = detail::gather(b.value(), bc.b_index, bc.out);
    Tensor<Scalar> out(bc.out, av.array() / bv.array());
    auto an = a.node(), bn = b.node();
    return record<Scalar>("div", std::move(out), {a, b}, [an, bn, bc, av, bv](Node<Scalar>& self) {
        if (an->requires_grad)
            detail::scatter_add(an, Tensor<Scalar>(self.grad.shape(), self.grad.array() / bv.array()), bc.a_index);
        if (bn->requires_grad)
            detail::scatter_add(
                bn, Tensor<Scalar>(self.grad.shape(), -self.grad.array() * av.array() / bv.array().square()),
                bc.b_index);
    });
}

template <typename Scalar>
Var<Scalar> scalar_mul(const Var<Scalar>& a, Scalar s)
{
    Tensor<Scalar> out(a.shape(), a.value().array() * s);
    auto an = a.node();
    return record<Scalar>("scalar_mul", std::move(out), {a},
                          [an, s](Node<Scalar>& self) { detail::accumulate_expr(an, self.grad.array() * s); });
}

template <typename Scalar>
Var<Scalar> add_scalar(const Var<Scalar>& a, Scalar s)
{
    Tensor<Scalar> out(a.shape(), a.value().array() + s);
    auto an = a.node();
    return record<Scalar>("add_scalar", std::move(out), {a},
                          [an](Node<Scalar>& self) { detail::accumulate(an, self.grad); });
}

template <typename Scalar>
Var<Scalar> leaky_relu(const Var<Scalar>& a, Scalar slope = Scalar(0.2))
{
    const auto& v = a.value().array();
    Tensor<Scalar> out(a.shape(), (v > 0).select(v, v * slope));
    auto an = a.node();
    return record<Scalar>("leaky_relu", std::move(out), {a}, [an, slope](Node<Scalar>& self) {
        const auto& x = an->value.array();
        detail::accumulate_expr(an, (x > 0).select(self.grad.array(), self.grad.array() * slope));
    });
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& a)
{
    return leaky_relu(a, Scalar(0));
}

/// min(v, 1): the sensor clipping nonlinearity. Gradient is 1 where v <= 1, else 0.
template <typename Scalar>
Var<Scalar> clip_min1(const Var<Scalar>& a)
{
    Tensor<Scalar> out(a.shape(), a.value().array().min(Scalar(1)));
    auto an = a.node();
    return record<Scalar>("clip_min1", std::move(out), {a}, [an](Node<Scalar>& self) {
        const auto& x = an->value.array();
        detail::accumulate_expr(an, (x <= Scalar(1)).select(self.grad.array(), Scalar(0)));
    });
}

template <typename Scalar>
Var<Scalar> abs(const Var<Scalar>& a)
{
    Tensor<Scalar> out(a.shape(), a.value().array().abs());
    auto an = a.node();
    return record<Scalar>("abs", std::move(out), {a}, [an](Node<Scalar>& self) {
        detail::accumulate_expr(an, self.grad.array() * an->value.array().sign());
    });
}

template <typename Scalar>
Var<Scalar> square(const Var<Scalar>& a)
{
    Tensor<Scalar> out(a.shape(), a.value().array().square());
    auto an = a.node();
    return record<Scalar>("square", std::move(out), {a}, [an](Node<Scalar>& self) {
        detail::accumulate_expr(an, self.grad.array() * Scalar(2) * an->value.array());
    });
}

template <typename Scalar>
Var<Scalar> sqrt(const Var<Scalar>& a)
{
    Tensor<Scalar> out(a.shape(), a.value().array().sqrt());
    auto an = a.node();
    auto root = out.array();
    return record<Scalar>("sqrt", std::move(out), {a}, [an, root](Node<Scalar>& self) {
        detail::accumulate_expr(an, self.grad.array() / (Scalar(2) * root));
    });
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& a)
{
    Tensor<Scalar> out(Shape{1}, a.value().array().sum());
    auto an = a.node();
    return record<Scalar>("sum", std::move(out), {a}, [an](Node<Scalar>& self) {
        const Scalar g = self.grad[0];
        detail::accumulate_expr(an, Tensor<Scalar>::Array::Constant(an->value.size(), g));
    });
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& a)
{
    const Scalar n = static_cast<Scalar>(a.size());
    Tensor<Scalar> out(Shape{1}, a.value().array().sum() / n);
    auto an = a.node();
    return record<Scalar>("mean", std::move(out), {a}, [an, n](Node<Scalar>& self) {
        const Scalar g = self.grad[0] / n;
        detail::accumulate_expr(an, Tensor<Scalar>::Array::Constant(an->value.size(), g));
    });
}

/// Sum of absolute values.
template <typename Scalar>
Var<Scalar> abs_sum(const Var<Scalar>& a)
{
    Tensor<Scalar> out(Shape{1}, a.value().array().abs().sum());
    auto an = a.node();
    return record<Scalar>("abs_sum", std::move(out), {a}, [an](Node<Scalar>& self) {
        detail::accumulate_expr(an, an->value.array().sign() * self.grad[0]);
    });
}

template <typename Scalar>
Var<Scalar> reshape(const Var<Scalar>& a, Shape s)
{
    Tensor<Scalar> out = a.value().reshaped(std::move(s));
    auto an = a.node();
    return record<Scalar>("reshape", std::move(out), {a},
                          [an](Node<Scalar>& self) { detail::accumulate_expr(an, self.grad.array()); });
}

/// Concatenation of 4-D tensors along the channel axis.
template <typename Scalar>
Var<Scalar> concat_channels(std::span<const Var<Scalar>> parts)
{
    if (parts.empty()) throw ContractError("concat_channels of nothing");
    const Shape& s0 = parts[0].shape();
    require_rank(s0, 4, "concat_channels");
    Index channels = 0;
    for (const auto& p : parts) {
        require_rank(p.shape(), 4, "concat_channels");
        if (p.dim(0) != s0[0] || p.dim(2) != s0[2] || p.dim(3) != s0[3])
            throw DimensionError("concat_channels: " + p.shape().str() + " vs " + s0.str());
        channels += p.dim(1);
    }
    const Index batch = s0[0], plane = s0[2] * s0[3];
    Tensor<Scalar> out(Shape{batch, channels, s0[2], s0[3]});
    std::vector<Index> offsets;
    Index c0 = 0;
    for (const auto& p : parts) {
        offsets.push_back(c0);
        const Index pc = p.dim(1);
        for (Index n = 0; n < batch; ++n)
            out.array().segment((n * channels + c0) * plane, pc * plane) =
                p.value().array().segment(n * pc * plane, pc * plane);
        c0 += pc;
    }
    std::vector<Var<Scalar>> inputs(parts.begin(), parts.end());
    std::vector<std::shared_ptr<Node<Scalar>>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    return record<Scalar>("concat_channels", std::move(out), inputs,
                          [nodes, offsets, batch, channels, plane](Node<Scalar>& self) {
                              for (std::size_t i = 0; i < nodes.size(); ++i) {
                                  if (!nodes[i]->requires_grad) continue;
                                  auto& g = nodes[i]->grad_buffer();
                                  const Index pc = nodes[i]->value.dim(1);
                                  for (Index n = 0; n < batch; ++n)
                                      g.array().segment(n * pc * plane, pc * plane) +=
                                          self.grad.array().segment((n * channels + offsets[i]) * plane, pc * plane);
                              }
                          });
}

template <typename Scalar>
Var<Scalar> concat_channels(std::initializer_list<Var<Scalar>> parts)
{
    std::vector<Var<Scalar>> v(parts);
    return concat_channels<Scalar>(std::span<const Var<Scalar>>(v));
}

/// Channels [begin, begin + count) of a 4-D tensor.
template <typename Scalar>
Var<Scalar> slice_channels(const Var<Scalar>& a, Index begin, Index count)
{
    require_rank(a.shape(), 4, "slice_channels");
    const Index batch = a.dim(0), channels = a.dim(1), plane = a.dim(2) * a.dim(3);
    if (begin < 0 || count < 1 || begin + count > channels)
        throw DimensionError("slice_channels: range out of bounds for " + a.shape().str());
    Tensor<Scalar> out(Shape{batch, count, a.dim(2), a.dim(3)});
    for (Index n = 0; n < batch; ++n)
        out.array().segment(n * count * plane, count * plane) =
            a.value().array().segment((n * channels + begin) * plane, count * plane);
    auto an = a.node();
    return record<Scalar>("slice_channels", std::move(out), {a},
                          [an, batch, channels, plane, begin, count](Node<Scalar>& self) {
                              if (!an->requires_grad) return;
                              auto& g = an->grad_buffer();
                              for (Index n = 0; n < batch; ++n)
                                  g.array().segment((n * channels + begin) * plane, count * plane) +=
                                      self.grad.array().segment(n * count * plane, count * plane);
                          });
}

enum class PadMode { zero, symmetric };

struct Padding {
    PadMode mode = PadMode::zero;
    Index size = 0;
};

namespace detail {
/// Source index for symmetric (edge-repeating mirror) extension.
inline Index mirror(Index i, Index n)
{
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - i - 1;
    }
    return i;
}
} // namespace detail

/// Pads the two spatial axes of a 4-D tensor by `p.size` on every side.
template <typename Scalar>
Var<Scalar> pad(const Var<Scalar>& a, Padding p)
{
    require_rank(a.shape(), 4, "pad");
    const Index B = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3), s = p.size;
    if (s == 0) return a;
    if (s >= std::min(H, W) && p.mode == PadMode::symmetric)
        throw DimensionError("pad: size " + std::to_string(s) + " must be below min extent of " + a.shape().str());
    const Index Ho = H + 2 * s, Wo = W + 2 * s;
    std::vector<Index> src(static_cast<std::size_t>(Ho * Wo), -1);
    for (Index i = 0; i < Ho; ++i)
        for (Index j = 0; j < Wo; ++j) {
            Index si = i - s, sj = j - s;
            if (p.mode == PadMode::symmetric) {
                si = detail::mirror(si, H);
                sj = detail::mirror(sj, W);
            } else if (si < 0 || si >= H || sj < 0 || sj >= W) {
                continue;
            }
            src[static_cast<std::size_t>(i * Wo + j)] = si * W + sj;
        }
    Tensor<Scalar> out(Shape{B, C, Ho, Wo});
    for (Index bc = 0; bc < B * C; ++bc) {
        const Scalar* in = a.value().data() + bc * H * W;
        Scalar* o = out.data() + bc * Ho * Wo;
        for (Index k = 0; k < Ho * Wo; ++k)
            if (src[static_cast<std::size_t>(k)] >= 0) o[k] = in[src[static_cast<std::size_t>(k)]];
    }
    auto an = a.node();
    return record<Scalar>("pad", std::move(out), {a}, [an, src, B, C, H, W, Ho, Wo](Node<Scalar>& self) {
        if (!an->requires_grad) return;
        auto& g = an->grad_buffer();
        for (Index bc = 0; bc < B * C; ++bc) {
            Scalar* gi = g.data() + bc * H * W;
            const Scalar* go = self.grad.data() + bc * Ho * Wo;
            for (Index k = 0; k < Ho * Wo; ++k)
                if (src[static_cast<std::size_t>(k)] >= 0) gi[src[static_cast<std::size_t>(k)]] += go[k];
        }
    });
}

namespace detail {

struct ConvGeometry {
    Index cin, h, w, kh, kw, stride, pad, ho, wo;
    [[nodiscard]] Index rows() const { return cin * kh * kw; }
    [[nodiscard]] Index cols() const { return ho * wo; }
};

template <typename Scalar>
void im2col(const Scalar* x, const ConvGeometry& g, Scalar* cols)
{
    for (Index c = 0; c < g.cin; ++c)
        for (Index i = 0; i < g.kh; ++i)
            for (Index j = 0; j < g.kw; ++j) {
                Scalar* row = cols + ((c * g.kh + i) * g.kw + j) * g.cols();
                const Scalar* plane = x + c * g.h * g.w;
                for (Index oh = 0; oh < g.ho; ++oh) {
                    const Index ih = oh * g.stride + i - g.pad;
                    Scalar* dst = row + oh * g.wo;
                    if (ih < 0 || ih >= g.h) {
                        std::fill(dst, dst + g.wo, Scalar(0));
                        continue;
                    }
                    const Scalar* src = plane + ih * g.w;
                    for (Index ow = 0; ow < g.wo; ++ow) {
                        const Index iw = ow * g.stride + j - g.pad;
                        dst[ow] = (iw >= 0 && iw < g.w) ? src[iw] : Scalar(0);
                    }
                }
            }
}

template <typename Scalar>
void col2im(const Scalar* cols, const ConvGeometry& g, Scalar* x)
{
    for (Index c = 0; c < g.cin; ++c)
        for (Index i = 0; i < g.kh; ++i)
            for (Index j = 0; j < g.kw; ++j) {
                const Scalar* row = cols + ((c * g.kh + i) * g.kw + j) * g.cols();
                Scalar* plane = x + c * g.h * g.w;
                for (Index oh = 0; oh < g.ho; ++oh) {
                    const Index ih = oh * g.stride + i - g.pad;
                    if (ih < 0 || ih >= g.h) continue;
                    Scalar* dst = plane + ih * g.w;
                    const Scalar* src = row + oh * g.wo;
                    for (Index ow = 0; ow < g.wo; ++ow) {
                        const Index iw = ow * g.stride + j - g.pad;
                        if (iw >= 0 && iw < g.w) dst[iw] += src[ow];
                    }
                }
            }
}

} // namespace detail

/// 2-D cross-correlation of a [B,Cin,H,W] input with a [Cout,Cin,kh,kw] weight.
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& input, const Var<Scalar>& weight, Index stride = 1, Padding padding = {})
{
    require_rank(input.shape(), 4, "conv2d input");
    require_rank(weight.shape(), 4, "conv2d weight");
    if (padding.mode == PadMode::symmetric && padding.size > 0)
        return conv2d(pad(input, padding), weight, stride, Padding{});
    const Index B = input.dim(0), cout = weight.dim(0);
    detail::ConvGeometry g{input.dim(1), input.dim(2), input.dim(3), weight.dim(2), weight.dim(3), stride,
                           padding.size, 0, 0};
    if (weight.dim(1) != g.cin)
        throw DimensionError("conv2d: input has " + std::to_string(g.cin) + " channels, weight " +
                             weight.shape().str() + " expects " + std::to_string(weight.dim(1)));
    if (g.kh < 1 || g.kw < 1 || stride < 1) throw ContractError("conv2d: kernel extents and stride must be >= 1");
    if (padding.size > 0 && padding.size >= std::min(g.h, g.w))
        throw DimensionError("conv2d: padding " + std::to_string(padding.size) + " too large for " +
                             input.shape().str());
    if (g.h + 2 * g.pad < g.kh || g.w + 2 * g.pad < g.kw)
        throw DimensionError("conv2d: kernel " + weight.shape().str() + " larger than padded input " +
                             input.shape().str());
    g.ho = (g.h + 2 * g.pad - g.kh) / stride + 1;
    g.wo = (g.w + 2 * g.pad - g.kw) / stride + 1;
    const bool direct = g.kh == 1 && g.kw == 1 && stride == 1 && g.pad == 0;

    using Mat = RowMatrix<Scalar>;
    using CMap = Eigen::Map<const Mat>;
    Tensor<Scalar> out(Shape{B, cout, g.ho, g.wo});
    CMap wmat(weight.value().data(), cout, g.rows());
    Mat cols(direct ? 0 : g.rows(), direct ? 0 : g.cols());
    for (Index n = 0; n < B; ++n) {
        const Scalar* x = input.value().data() + n * g.cin * g.h * g.w;
        Eigen::Map<Mat> o(out.data() + n * cout * g.cols(), cout, g.cols());
        if (direct) {
            o.noalias() = wmat * CMap(x, g.rows(), g.cols());
        } else {
            detail::im2col(x, g, cols.data());
            o.noalias() = wmat * cols;
        }
    }
    auto in = input.node(), wn = weight.node();
    return record<Scalar>("conv2d", std::move(out), {input, weight}, [in, wn, g, B, cout, direct](Node<Scalar>& self) {
        CMap wmat(wn->value.data(), cout, g.rows());
        Mat cols(g.rows(), g.cols());
        for (Index n = 0; n < B; ++n) {
            CMap go(self.grad.data() + n * cout * g.cols(), cout, g.cols());
            const Scalar* x = in->value.data() + n * g.cin * g.h * g.w;
            if (wn->requires_grad) {
                Eigen::Map<Mat> gw(wn->grad_buffer().data(), cout, g.rows());
                if (direct)
                    gw.noalias() += go * CMap(x, g.rows(), g.cols()).transpose();
                else {
                    detail::im2col(x, g, cols.data());
                    gw.noalias() += go * cols.transpose();
                }
            }
            if (in->requires_grad) {
                Scalar* gx = in->grad_buffer().data() + n * g.cin * g.h * g.w;
                if (direct) {
                    Eigen::Map<Mat>(gx, g.rows(), g.cols()).noalias() += wmat.transpose() * go;
                } else {
                    cols.noalias() = wmat.transpose() * go;
                    detail::col2im(cols.data(), g, gx);
                }
            }
        }
    });
}

/// Nearest-neighbour x2 upsampling of the spatial axes.
template <typename Scalar>
Var<Scalar> upsample_nearest2x(const Var<Scalar>& a)
{
    require_rank(a.shape(), 4, "upsample_nearest2x");
    const Index BC = a.dim(0) * a.dim(1), H = a.dim(2), W = a.dim(3);
    Tensor<Scalar> out(Shape{a.dim(0), a.dim(1), 2 * H, 2 * W});
    for (Index p = 0; p < BC; ++p) {
        const Scalar* in = a.value().data() + p * H * W;
        Scalar* o = out.data() + p * 4 * H * W;
        for (Index i = 0; i < 2 * H; ++i)
            for (Index j = 0; j < 2 * W; ++j) o[i * 2 * W + j] = in[(i / 2) * W + j / 2];
    }
    auto an = a.node();
    return record<Scalar>("upsample_nearest2x", std::move(out), {a}, [an, BC, H, W](Node<Scalar>& self) {
        if (!an->requires_grad) return;
        auto& g = an->grad_buffer();
        for (Index p = 0; p < BC; ++p) {
            Scalar* gi = g.data() + p * H * W;
            const Scalar* go = self.grad.data() + p * 4 * H * W;
            for (Index i = 0; i < 2 * H; ++i)
                for (Index j = 0; j < 2 * W; ++j) gi[(i / 2) * W + j / 2] += go[i * 2 * W + j];
        }
    });
}

// Operator sugar for readability in loss and network code.
template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) { return add(a, b); }
template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) { return sub(a, b); }
template <typename Scalar>
Var<Scalar> operator*(const Var<Scalar>& a, const Var<Scalar>& b) { return mul(a, b); }
template <typename Scalar>
Var<Scalar> operator*(Scalar s, const Var<Scalar>& a) { return scalar_mul(a, s); }

} // namespace infwide
