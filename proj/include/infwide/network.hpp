#pragma once

// Two-branch deblurring network. The image branch enhances the blurry input
// (EM) and deconvolves it; the feature branch extracts features (FM),
// deconvolves them and refines them back to an image (FSRM). A cross-residual
// fusion module (XRFM), shared across a coarse-to-fine pyramid, merges both.

#include "infwide/random.hpp"
#include "infwide/resample.hpp"
#include "infwide/wiener.hpp"

#include <json.hpp>

#include <map>
#include <optional>
#include <string>

namespace infwide {

enum class FusionMode { xrfm, add, concat };
enum class BranchMode { both, image_only, feature_only };

std::string to_string(FusionMode m);
std::string to_string(BranchMode m);
FusionMode parse_fusion_mode(const std::string& s);
BranchMode parse_branch_mode(const std::string& s);

struct NetworkConfig {
    int base_channels = 16;
    int unet_depth = 3;          // resolution levels of each ResUNet
    int resblocks_per_level = 2;
    int fm_feature_count = 16;
    int scales = 2;
    FusionMode fusion = FusionMode::xrfm;
    BranchMode branch = BranchMode::both;
    bool per_feature_nsr = false;

    void validate() const;
    /// Required divisor of the input height and width.
    [[nodiscard]] Index divisor() const { return Index{1} << (unet_depth + scales - 1); }
    [[nodiscard]] std::uint64_t hash() const;
};

void to_json(nlohmann::json& j, const NetworkConfig& c);
void from_json(const nlohmann::json& j, NetworkConfig& c);

enum class InitMode {
    standard, // Kaiming-uniform, zeros for the last conv of every residual path
    generic   // residual tails get small random weights instead; exercises every gradient path
};

/// Named learnable tensors. Parameters are created on first use with a
/// deterministic initializer seeded by (seed, name), so creation order is irrelevant.
template <typename Scalar>
class ParamStore {
public:
    enum class Init { kaiming, zero };

    explicit ParamStore(std::uint64_t seed = 0, InitMode mode = InitMode::standard) : seed_(seed), mode_(mode) {}

    Var<Scalar> get(const std::string& name, const Shape& shape, Init init)
    {
        auto it = params_.find(name);
        if (it != params_.end()) {
            if (it->second.shape() != shape)
                throw DimensionError("parameter " + name + " has shape " + it->second.shape().str() + ", requested " +
                                     shape.str());
            return it->second;
        }
        if (frozen_) throw ContractError("unknown parameter " + name);
        auto p = Var<Scalar>::parameter(initial_value(name, shape, init));
        params_.emplace(name, p);
        return p;
    }

    [[nodiscard]] const std::map<std::string, Var<Scalar>>& named() const { return params_; }
    std::map<std::string, Var<Scalar>>& named() { return params_; }
    [[nodiscard]] std::vector<Var<Scalar>> list() const
    {
        std::vector<Var<Scalar>> v;
        for (const auto& [_, p] : params_) v.push_back(p);
        return v;
    }
    [[nodiscard]] Index count() const
    {
        Index n = 0;
        for (const auto& [_, p] : params_) n += p.size();
        return n;
    }
    void zero_grad()
    {
        for (auto& [_, p] : params_) p.zero_grad();
    }
    void freeze() { frozen_ = true; }
    [[nodiscard]] bool frozen() const { return frozen_; }
    [[nodiscard]] std::uint64_t seed() const { return seed_; }

    /// Replaces or inserts a parameter value (checkpoint loading, weight tying in tests).
    void set(const std::string& name, Tensor<Scalar> value) { params_[name] = Var<Scalar>::parameter(std::move(value)); }

    template <typename Other>
    [[nodiscard]] ParamStore<Other> cast() const
    {
        ParamStore<Other> out(seed_, mode_);
        for (const auto& [name, p] : params_) out.set(name, p.value().template cast<Other>());
        if (frozen_) out.freeze();
        return out;
    }

private:
    Tensor<Scalar> initial_value(const std::string& name, const Shape& shape, Init init) const
    {
        Tensor<Scalar> t(shape);
        if (init == Init::zero && mode_ == InitMode::standard) return t;
        // Kaiming-uniform for a leaky-ReLU slope of 0.2.
        const double fan_in = static_cast<double>(shape.numel() / shape[0]);
        const double gain = std::sqrt(2.0 / (1.0 + 0.2 * 0.2));
        const double bound = gain * std::sqrt(3.0 / fan_in) * (init == Init::zero ? 0.1 : 1.0);
        Rng rng(split_seed(seed_, hash_name(name)));
        for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
        return t;
    }

    std::uint64_t seed_;
    InitMode mode_;
    bool frozen_ = false;
    std::map<std::string, Var<Scalar>> params_;
};

namespace layers {

template <typename Scalar>
using Init = typename ParamStore<Scalar>::Init;

/// Bias-free convolution with 'same' zero padding for odd kernels.
template <typename Scalar>
Var<Scalar> conv(ParamStore<Scalar>& store, const std::string& name, const Var<Scalar>& x, Index cout, Index k,
                 Index stride = 1, Init<Scalar> init = Init<Scalar>::kaiming)
{
    const auto w = store.get(name, Shape{cout, x.dim(1), k, k}, init);
    return conv2d(x, w, stride, Padding{PadMode::zero, k % 2 == 1 ? k / 2 : 0});
}

template <typename Scalar>
Var<Scalar> lrelu(const Var<Scalar>& x)
{
    return leaky_relu(x, Scalar(0.2));
}

/// x + conv(lrelu(conv(x))), the second conv zero-initialized.
template <typename Scalar>
Var<Scalar> resblock(ParamStore<Scalar>& store, const std::string& name, const Var<Scalar>& x)
{
    const Index c = x.dim(1);
    auto h = lrelu(conv(store, name + ".conv1", x, c, 3));
    return x + conv(store, name + ".conv2", h, c, 3, 1, Init<Scalar>::zero);
}

/// Residual U-Net body: strided-conv encoder, resblock bottleneck, nearest-upsample
/// decoder with concatenated skips. Returns the tail output (no outer residual).
template <typename Scalar>
Var<Scalar> resunet(ParamStore<Scalar>& store, const std::string& name, const Var<Scalar>& x, Index cout,
                    const NetworkConfig& cfg, Init<Scalar> tail_init)
{
    const int depth = cfg.unet_depth, nb = cfg.resblocks_per_level;
    auto channels = [&](int level) { return static_cast<Index>(cfg.base_channels) << level; };
    auto h = conv(store, name + ".head", x, channels(0), 3);
    std::vector<Var<Scalar>> skips;
    for (int l = 0; l + 1 < depth; ++l) {
        for (int r = 0; r < nb; ++r) h = resblock(store, name + ".enc" + std::to_string(l) + ".rb" + std::to_string(r), h);
        skips.push_back(h);
        h = conv(store, name + ".down" + std::to_string(l), h, channels(l + 1), 2, 2);
    }
    for (int r = 0; r < nb; ++r) h = resblock(store, name + ".body.rb" + std::to_string(r), h);
    for (int l = depth - 2; l >= 0; --l) {
        const std::string lvl = std::to_string(l);
        h = conv(store, name + ".up" + lvl, upsample_nearest2x(h), channels(l), 3);
        h = conv(store, name + ".merge" + lvl, concat_channels<Scalar>({h, skips[static_cast<std::size_t>(l)]}),
                 channels(l), 1);
        for (int r = 0; r < nb; ++r) h = resblock(store, name + ".dec" + lvl + ".rb" + std::to_string(r), h);
    }
    return conv(store, name + ".tail", h, cout, 3, 1, tail_init);
}

} // namespace layers

template <typename Scalar>
void check_extents(const Var<Scalar>& x, Index divisor, const char* what)
{
    require_rank(x.shape(), 4, what);
    if (x.dim(2) % divisor != 0 || x.dim(3) % divisor != 0)
        throw ContractError(std::string(what) + ": height and width must be divisible by " + std::to_string(divisor) +
                            ", got " + x.shape().str());
}

/// Enhancement module: y + ResUNet(concat(y, noise_map)). Output may exceed 1.
template <typename Scalar>
Var<Scalar> em_forward(const Var<Scalar>& y, const Var<Scalar>& noise_map, ParamStore<Scalar>& store,
                       const NetworkConfig& cfg)
{
    check_extents(y, Index{1} << cfg.unet_depth, "em_forward");
    auto f = layers::resunet(store, "em", concat_channels<Scalar>({y, noise_map}), 3, cfg,
                             layers::Init<Scalar>::zero);
    return y + f;
}

/// Feature module: one 3->F convolution, then three F-channel residual blocks.
template <typename Scalar>
Var<Scalar> fm_forward(const Var<Scalar>& y, ParamStore<Scalar>& store, const NetworkConfig& cfg)
{
    check_extents(y, Index{1} << cfg.unet_depth, "fm_forward");
    auto h = layers::conv(store, "fm.head", y, cfg.fm_feature_count, 3);
    for (int r = 0; r < 3; ++r) h = layers::resblock(store, "fm.rb" + std::to_string(r), h);
    return h;
}

/// Feature-space refine module: ResUNet from F feature maps to 3 channels.
template <typename Scalar>
Var<Scalar> fsrm_forward(const Var<Scalar>& features, ParamStore<Scalar>& store, const NetworkConfig& cfg)
{
    return layers::resunet(store, "fsrm", features, 3, cfg, layers::Init<Scalar>::kaiming);
}

/// NSR per feature plane, estimated from the (detached) feature values.
template <typename Scalar>
std::vector<double> feature_nsr(const Tensor<Scalar>& features)
{
    const Index B = features.dim(0), C = features.dim(1), plane = features.dim(2) * features.dim(3);
    std::vector<double> out;
    for (Index n = 0; n < B; ++n)
        for (Index c = 0; c < C; ++c)
            out.push_back(estimate_nsr(Tensor<Scalar>(Shape{1, 1, features.dim(2), features.dim(3)},
                                                      features.array().segment((n * C + c) * plane, plane)))
                              .nsr);
    return out;
}

/// FSRM(wiener(features)) for one pyramid level.
template <typename Scalar>
Var<Scalar> refine_features(const Var<Scalar>& features, std::span<const Tensor<Scalar>> kernels,
                            std::span<const double> nsr, ParamStore<Scalar>& store, const NetworkConfig& cfg)
{
    std::vector<double> per_plane;
    if (cfg.per_feature_nsr) per_plane = feature_nsr(features.value());
    const auto deconv = cfg.per_feature_nsr ? wiener_deconvolve(features, kernels, std::span<const double>(per_plane))
                                            : wiener_deconvolve(features, kernels, nsr);
    return fsrm_forward(deconv, store, cfg);
}

/// Feature branch at full resolution: FSRM(wiener(FM(y), k, nsr)).
template <typename Scalar>
Var<Scalar> feature_branch_forward(const Var<Scalar>& y, std::span<const Tensor<Scalar>> kernels,
                                   std::span<const double> nsr, ParamStore<Scalar>& store, const NetworkConfig& cfg)
{
    return refine_features(fm_forward(y, store, cfg), kernels, nsr, store, cfg);
}

/// Cross residual block. s = h(a) + h(b) is shared by both streams;
/// a' = a + g_a(a, s), b' = b + g_b(b, s).
template <typename Scalar>
std::pair<Var<Scalar>, Var<Scalar>> xrb_forward(const Var<Scalar>& a, const Var<Scalar>& b, ParamStore<Scalar>& store,
                                                const std::string& name)
{
    if (a.shape() != b.shape()) throw ContractError("xrb: stream shapes differ: " + a.shape().str() + " vs " + b.shape().str());
    using layers::conv;
    using layers::lrelu;
    const Index c = a.dim(1);
    auto inner = [&](const Var<Scalar>& x) { return lrelu(conv(store, name + ".h", x, c, 3)); };
    const auto s = inner(a) + inner(b);
    auto stream = [&](const Var<Scalar>& x, const std::string& g) {
        auto t = lrelu(conv(store, name + "." + g + ".conv1", concat_channels<Scalar>({x, s}), c, 3));
        return x + conv(store, name + "." + g + ".conv2", t, c, 3, 1, layers::Init<Scalar>::zero);
    };
    return {stream(a, "ga"), stream(b, "gb")};
}

/// Two-stream encoder-decoder of four XRBs. Stream A starts from concat(x1, carry),
/// stream B from x2; a 1x1 head merges both into a residual on x1.
template <typename Scalar>
Var<Scalar> xrfm_forward(const Var<Scalar>& x1, const Var<Scalar>& x2, const Var<Scalar>& carry,
                         ParamStore<Scalar>& store, const NetworkConfig& cfg)
{
    if (x1.shape() != x2.shape() || x1.shape() != carry.shape())
        throw ContractError("xrfm: inputs differ in shape: " + x1.shape().str() + ", " + x2.shape().str() + ", " +
                            carry.shape().str());
    check_extents(x1, 4, "xrfm_forward");
    using layers::conv;
    const Index c = cfg.base_channels;
    auto a = conv(store, "xrfm.head_a", concat_channels<Scalar>({x1, carry}), c, 3);
    auto b = conv(store, "xrfm.head_b", x2, c, 3);
    std::tie(a, b) = xrb_forward(a, b, store, "xrfm.enc0");
    const auto skip_a0 = a, skip_b0 = b;
    a = conv(store, "xrfm.down0_a", a, 2 * c, 2, 2);
    b = conv(store, "xrfm.down0_b", b, 2 * c, 2, 2);
    std::tie(a, b) = xrb_forward(a, b, store, "xrfm.enc1");
    const auto skip_a1 = a, skip_b1 = b;
    a = conv(store, "xrfm.down1_a", a, 4 * c, 2, 2);
    b = conv(store, "xrfm.down1_b", b, 4 * c, 2, 2);
    std::tie(a, b) = xrb_forward(a, b, store, "xrfm.mid");
    auto up = [&](const Var<Scalar>& x, const Var<Scalar>& skip, const std::string& name) {
        const Index ch = skip.dim(1);
        auto h = conv(store, name + ".up", upsample_nearest2x(x), ch, 3);
        return conv(store, name + ".merge", concat_channels<Scalar>({h, skip}), ch, 1);
    };
    a = up(a, skip_a1, "xrfm.up1_a");
    b = up(b, skip_b1, "xrfm.up1_b");
    std::tie(a, b) = xrb_forward(a, b, store, "xrfm.dec1");
    a = up(a, skip_a0, "xrfm.up0_a");
    b = up(b, skip_b0, "xrfm.up0_b");
    return x1 + conv(store, "xrfm.tail", concat_channels<Scalar>({a, b}), 3, 1, 1, layers::Init<Scalar>::zero);
}

/// Fusion stage selected by the configuration (XRFM or an add/concat + ResUNet baseline).
template <typename Scalar>
Var<Scalar> fuse(const Var<Scalar>& x1, const Var<Scalar>& x2, const Var<Scalar>& carry, ParamStore<Scalar>& store,
                 const NetworkConfig& cfg)
{
    switch (cfg.fusion) {
    case FusionMode::xrfm:
        return xrfm_forward(x1, x2, carry, store, cfg);
    case FusionMode::add:
        return x1 + layers::resunet(store, "fuse", concat_channels<Scalar>({x1 + x2, carry}), 3, cfg,
                                    layers::Init<Scalar>::zero);
    case FusionMode::concat:
        return x1 + layers::resunet(store, "fuse", concat_channels<Scalar>({x1, x2, carry}), 3, cfg,
                                    layers::Init<Scalar>::zero);
    }
    throw ContractError("unknown fusion mode");
}

/// Halves a kernel for the next pyramid level: fine offset v maps to v/2 when even
/// and splits evenly between its two coarse neighbours when odd. Renormalized to sum 1.
template <typename Scalar>
Tensor<Scalar> downsample_kernel(const Tensor<Scalar>& k)
{
    require_rank(k.shape(), 2, "downsample_kernel");
    if (k.dim(0) % 2 == 0 || k.dim(1) % 2 == 0) throw ContractError("downsample_kernel needs odd extents");
    const Index rh = k.dim(0) / 2, rw = k.dim(1) / 2, ch = (rh + 1) / 2, cw = (rw + 1) / 2;
    Tensor<Scalar> out(Shape{2 * ch + 1, 2 * cw + 1});
    auto targets = [](Index v, Index rc) {
        std::vector<std::pair<Index, double>> t;
        if (v % 2 == 0) {
            t.emplace_back(v / 2 + rc, 1.0);
        } else {
            t.emplace_back((v - 1) / 2 + rc, 0.5); // v - 1 is even, so this is exact
            t.emplace_back((v + 1) / 2 + rc, 0.5);
        }
        return t;
    };
    for (Index i = 0; i < k.dim(0); ++i)
        for (Index j = 0; j < k.dim(1); ++j)
            for (auto [u, wu] : targets(i - rh, ch))
                for (auto [v, wv] : targets(j - rw, cw)) out.at(u, v) += static_cast<Scalar>(wu * wv) * k.at(i, j);
    out.array() /= out.array().sum();
    return out;
}

struct ForwardOptions {
    std::optional<double> nsr_override; // replaces the estimated NSR for every sample
};

template <typename Scalar>
struct ForwardResult {
    std::vector<Var<Scalar>> outputs; // fine first: (H, W), (H/2, W/2), ...
    Var<Scalar> enhanced;             // EM output; undefined when the image branch is off
    Var<Scalar> image_estimate;       // x1 at full resolution
    Var<Scalar> feature_estimate;     // x2 at full resolution
    std::vector<double> nsr;
};

/// Full forward pass. `kernels[n]` is the (normalized) blur kernel of sample n.
template <typename Scalar>
ForwardResult<Scalar> infwide_forward(const Var<Scalar>& y, std::span<const Tensor<Scalar>> kernels,
                                      ParamStore<Scalar>& store, const NetworkConfig& cfg,
                                      const ForwardOptions& opts = {})
{
    cfg.validate();
    check_extents(y, cfg.divisor(), "infwide_forward");
    if (y.dim(1) != 3) throw DimensionError("infwide_forward expects 3-channel input, got " + y.shape().str());
    if (static_cast<Index>(kernels.size()) != y.dim(0))
        throw DimensionError("infwide_forward: " + std::to_string(kernels.size()) + " kernels for batch " +
                             y.shape().str());
    const bool image_branch = cfg.branch != BranchMode::feature_only;
    const bool feature_branch = cfg.branch != BranchMode::image_only;
    const auto scales = static_cast<std::size_t>(cfg.scales);

    ForwardResult<Scalar> r;
    r.nsr = opts.nsr_override ? std::vector<double>(kernels.size(), *opts.nsr_override) : estimate_nsr_batch(y.value());
    const std::span<const double> nsr(r.nsr);

    std::vector<std::vector<Tensor<Scalar>>> pyramid_kernels{{kernels.begin(), kernels.end()}};
    for (std::size_t l = 1; l < scales; ++l) {
        std::vector<Tensor<Scalar>> ks;
        for (const auto& k : pyramid_kernels.back()) ks.push_back(downsample_kernel(k));
        pyramid_kernels.push_back(std::move(ks));
    }
    auto kernels_at = [&](std::size_t l) { return std::span<const Tensor<Scalar>>(pyramid_kernels[l]); };
    auto down = [](const Var<Scalar>& v, std::size_t times) {
        Var<Scalar> out = v;
        for (std::size_t i = 0; i < times; ++i) out = resample(out, 0.5, Interpolation::bicubic);
        return out;
    };

    Var<Scalar> features;
    if (image_branch) {
        const auto noise_map = Var<Scalar>::constant(estimate_noise_map(y.value()));
        r.enhanced = em_forward(y, noise_map, store, cfg);
    }
    if (feature_branch) features = fm_forward(y, store, cfg);

    // Branch estimates per pyramid level.
    std::vector<Var<Scalar>> first(scales), second(scales);
    for (std::size_t l = 0; l < scales; ++l) {
        Var<Scalar> x1, x2;
        if (image_branch) x1 = wiener_deconvolve(down(r.enhanced, l), kernels_at(l), nsr);
        if (feature_branch) x2 = refine_features(down(features, l), kernels_at(l), nsr, store, cfg);
        if (l == 0) {
            r.image_estimate = x1;
            r.feature_estimate = x2;
        }
        first[l] = image_branch ? x1 : x2;
        second[l] = feature_branch ? x2 : x1;
    }

    // Coarse to fine; the coarsest carry is the downsampled full-resolution first stream.
    r.outputs.resize(scales);
    Var<Scalar> carry = down(first[0], scales - 1);
    for (std::size_t l = scales; l-- > 0;) {
        r.outputs[l] = fuse(first[l], second[l], carry, store, cfg);
        if (l > 0) carry = resample(r.outputs[l], 2.0, Interpolation::bilinear);
    }
    return r;
}

/// Creates every parameter for `cfg` and freezes the store.
template <typename Scalar>
ParamStore<Scalar> init_network(const NetworkConfig& cfg, std::uint64_t seed, InitMode mode = InitMode::standard)
{
    cfg.validate();
    ParamStore<Scalar> store(seed, mode);
    NoGradGuard guard;
    const Index side = std::max<Index>(cfg.divisor(), 16);
    auto y = Var<Scalar>::constant(Tensor<Scalar>(Shape{1, 3, side, side}, Scalar(0.5)));
    Tensor<Scalar> delta(Shape{1, 1}, Scalar(1));
    std::vector<Tensor<Scalar>> ks{delta};
    infwide_forward(y, std::span<const Tensor<Scalar>>(ks), store, cfg);
    store.freeze();
    return store;
}

} // namespace infwide
