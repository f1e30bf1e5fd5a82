#pragma once

#include "infwide/ops.hpp"

#include <unsupported/Eigen/FFT>

#include <complex>

namespace infwide {

/// Complex counterpart of Tensor; the last two axes are the transformed plane.
template <typename Scalar>
class ComplexTensor {
public:
    using Complex = std::complex<Scalar>;
    using Array = Eigen::Array<Complex, Eigen::Dynamic, 1>;

    ComplexTensor() = default;
    explicit ComplexTensor(Shape shape) : shape_(std::move(shape)), data_(Array::Zero(shape_.numel())) {}

    [[nodiscard]] const Shape& shape() const { return shape_; }
    [[nodiscard]] Index size() const { return data_.size(); }
    Array& array() { return data_; }
    [[nodiscard]] const Array& array() const { return data_; }
    Complex* data() { return data_.data(); }
    [[nodiscard]] const Complex* data() const { return data_.data(); }
    Complex& operator[](Index i) { return data_[i]; }
    Complex operator[](Index i) const { return data_[i]; }

private:
    Shape shape_;
    Array data_;
};

namespace detail {

/// In-place 2-D DFT of one row-major H x W plane (rows, then columns).
template <typename Scalar>
void dft_plane(std::complex<Scalar>* plane, Index H, Index W, bool inverse, Eigen::FFT<Scalar>& fft)
{
    using C = std::complex<Scalar>;
    std::vector<C> in(static_cast<std::size_t>(std::max(H, W))), out;
    auto run = [&](std::vector<C>& src, Index n) {
        src.resize(static_cast<std::size_t>(n));
        if (inverse)
            fft.inv(out, src);
        else
            fft.fwd(out, src);
    };
    for (Index r = 0; r < H; ++r) {
        in.assign(plane + r * W, plane + (r + 1) * W);
        run(in, W);
        std::copy(out.begin(), out.end(), plane + r * W);
    }
    for (Index c = 0; c < W; ++c) {
        in.resize(static_cast<std::size_t>(H));
        for (Index r = 0; r < H; ++r) in[static_cast<std::size_t>(r)] = plane[r * W + c];
        run(in, H);
        for (Index r = 0; r < H; ++r) plane[r * W + c] = out[static_cast<std::size_t>(r)];
    }
}

} // namespace detail

/// Unnormalized forward DFT over the last two axes.
template <typename Scalar>
ComplexTensor<Scalar> fft2(const Tensor<Scalar>& x)
{
    if (x.rank() < 2) throw DimensionError("fft2 needs at least two axes, got " + x.shape().str());
    const Index H = x.shape().back(1), W = x.shape().back(0);
    if (H < 1 || W < 1) throw DimensionError("fft2 on empty plane " + x.shape().str());
    ComplexTensor<Scalar> out(x.shape());
    out.array() = x.array().template cast<std::complex<Scalar>>();
    Eigen::FFT<Scalar> fft;
    for (Index p = 0; p < x.size() / (H * W); ++p) detail::dft_plane(out.data() + p * H * W, H, W, false, fft);
    return out;
}

/// Inverse DFT (1/HW normalized); returns the real part.
template <typename Scalar>
Tensor<Scalar> ifft2(const ComplexTensor<Scalar>& X)
{
    const Index H = X.shape().back(1), W = X.shape().back(0);
    ComplexTensor<Scalar> tmp = X;
    Eigen::FFT<Scalar> fft;
    for (Index p = 0; p < X.size() / (H * W); ++p) detail::dft_plane(tmp.data() + p * H * W, H, W, true, fft);
    return Tensor<Scalar>(X.shape(), tmp.array().real());
}

/// Zero-pads a 2-D kernel to H x W and rolls it so the kernel centre sits at (0, 0).
template <typename Scalar>
Tensor<Scalar> embed_kernel(const Tensor<Scalar>& k, Index H, Index W)
{
    require_rank(k.shape(), 2, "embed_kernel");
    const Index kh = k.dim(0), kw = k.dim(1);
    if (kh > H || kw > W)
        throw ContractError("kernel " + k.shape().str() + " does not fit inside a " + std::to_string(H) + "x" +
                            std::to_string(W) + " image");
    Tensor<Scalar> out(Shape{H, W});
    const Index ch = kh / 2, cw = kw / 2;
    for (Index i = 0; i < kh; ++i)
        for (Index j = 0; j < kw; ++j) {
            const Index r = ((i - ch) % H + H) % H, c = ((j - cw) % W + W) % W;
            out.at(r, c) += k.at(i, j);
        }
    return out;
}

/// Transfer function F(k) of a kernel embedded in an H x W periodic grid.
template <typename Scalar>
ComplexTensor<Scalar> kernel_spectrum(const Tensor<Scalar>& k, Index H, Index W)
{
    return fft2(embed_kernel(k, H, W));
}

/// y = real(ifft2(T .* fft2(x))) per plane. `transfer` holds one function per batch
/// item (shared by its channels) or one per (item, channel) plane. The adjoint
/// applies conj(T), so the layer is exactly linear in x.
template <typename Scalar>
Var<Scalar> spectral_filter(const Var<Scalar>& x, std::vector<ComplexTensor<Scalar>> transfer)
{
    require_rank(x.shape(), 4, "spectral_filter");
    const Index B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const auto count = static_cast<Index>(transfer.size());
    if (count != B && count != B * C)
        throw DimensionError("spectral_filter: " + std::to_string(count) + " filters for " + x.shape().str());
    for (const auto& t : transfer)
        if (t.shape() != Shape{H, W})
            throw DimensionError("spectral_filter: filter " + t.shape().str() + " vs image " + x.shape().str());
    const bool per_plane = count == B * C && C > 1;

    auto apply = [B, C, H, W, per_plane](const Tensor<Scalar>& in, const std::vector<ComplexTensor<Scalar>>& T,
                                         bool adjoint) {
        Tensor<Scalar> result(in.shape());
        Eigen::FFT<Scalar> fft;
        Eigen::Array<std::complex<Scalar>, Eigen::Dynamic, 1> buf(H * W);
        for (Index n = 0; n < B; ++n)
            for (Index c = 0; c < C; ++c) {
                const Index off = (n * C + c) * H * W;
                const auto& t = T[static_cast<std::size_t>(per_plane ? n * C + c : n)].array();
                buf = in.array().segment(off, H * W).template cast<std::complex<Scalar>>();
                detail::dft_plane(buf.data(), H, W, false, fft);
                if (adjoint)
                    buf *= t.conjugate();
                else
                    buf *= t;
                detail::dft_plane(buf.data(), H, W, true, fft);
                result.array().segment(off, H * W) = buf.real();
            }
        return result;
    };

    Tensor<Scalar> out = apply(x.value(), transfer, false);
    auto xn = x.node();
    return record<Scalar>("spectral_filter", std::move(out), {x},
                          [xn, transfer = std::move(transfer), apply](Node<Scalar>& self) {
                              if (xn->requires_grad) detail::accumulate(xn, apply(self.grad, transfer, true));
                          });
}

/// Circular convolution of every channel of sample n with kernels[n].
template <typename Scalar>
Var<Scalar> circular_convolve(const Var<Scalar>& x, std::span<const Tensor<Scalar>> kernels)
{
    require_rank(x.shape(), 4, "circular_convolve");
    std::vector<ComplexTensor<Scalar>> T;
    T.reserve(kernels.size());
    for (const auto& k : kernels) T.push_back(kernel_spectrum(k, x.dim(2), x.dim(3)));
    return spectral_filter(x, std::move(T));
}

} // namespace infwide
