#include "infwide/degrade.hpp"

#include "infwide/fft.hpp"
#include "infwide/random.hpp"

#include <cmath>

namespace infwide {

namespace {

constexpr int kTrajectorySteps = 256;
constexpr double kSplatBlurSigma = 0.5;

enum Stream : std::uint64_t { kKernel = 1, kParams, kNoise, kStreak, kShot, kDark, kRead, kJitter };

} // namespace

void BlurKernel::validate() const
{
    require_rank(values.shape(), 2, "BlurKernel");
    const Index s = values.dim(0);
    if (values.dim(1) != s || s % 2 == 0) throw ContractError("blur kernel must be square with odd side, got " + values.shape().str());
    if ((values.array() < 0.0).any()) throw ContractError("blur kernel has negative entries");
    if (std::abs(values.array().sum() - 1.0) > 1e-12) throw ContractError("blur kernel does not sum to 1");
}

BlurKernel generate_kernel(std::uint64_t seed, int side_min, int side_max)
{
    if (side_min % 2 == 0 || side_max % 2 == 0 || side_min < 13 || side_max > 35 || side_min > side_max)
        throw ContractError("kernel side bounds must be odd with 13 <= min <= max <= 35, got [" +
                            std::to_string(side_min) + ", " + std::to_string(side_max) + "]");
    Rng rng(seed);
    const int side = side_min + 2 * static_cast<int>(rng.uniform_int(0, (side_max - side_min) / 2));

    // Random walk with Gaussian velocity increments.
    std::vector<double> px(kTrajectorySteps), py(kTrajectorySteps);
    const double heading = rng.uniform(0.0, 2.0 * M_PI);
    double vx = std::cos(heading), vy = std::sin(heading), x = 0.0, y = 0.0;
    for (int t = 0; t < kTrajectorySteps; ++t) {
        px[static_cast<std::size_t>(t)] = x;
        py[static_cast<std::size_t>(t)] = y;
        vx = 0.95 * vx + rng.normal(0.0, 0.35);
        vy = 0.95 * vy + rng.normal(0.0, 0.35);
        x += vx;
        y += vy;
    }
    const auto [xmin, xmax] = std::minmax_element(px.begin(), px.end());
    const auto [ymin, ymax] = std::minmax_element(py.begin(), py.end());
    const double extent = std::max({*xmax - *xmin, *ymax - *ymin, 1e-9});
    // Keep two pixels of margin for the splat and its Gaussian blur.
    const double target = (side - 5) * rng.uniform(0.5, 1.0);
    const double scale = target / extent;
    const double cx = 0.5 * (*xmin + *xmax), cy = 0.5 * (*ymin + *ymax), centre = (side - 1) / 2.0;

    RowMatrix<double> splat = RowMatrix<double>::Zero(side, side);
    for (int t = 0; t < kTrajectorySteps; ++t) {
        const double u = centre + (py[static_cast<std::size_t>(t)] - cy) * scale;
        const double v = centre + (px[static_cast<std::size_t>(t)] - cx) * scale;
        const auto i = static_cast<Index>(std::floor(u)), j = static_cast<Index>(std::floor(v));
        const double fu = u - static_cast<double>(i), fv = v - static_cast<double>(j);
        splat(i, j) += (1 - fu) * (1 - fv);
        splat(i + 1, j) += fu * (1 - fv);
        splat(i, j + 1) += (1 - fu) * fv;
        splat(i + 1, j + 1) += fu * fv;
    }

    Eigen::Matrix<double, 5, 1> g;
    for (int d = -2; d <= 2; ++d) g(d + 2) = std::exp(-0.5 * d * d / (kSplatBlurSigma * kSplatBlurSigma));
    g /= g.sum();
    RowMatrix<double> blurred = RowMatrix<double>::Zero(side, side);
    for (Index i = 0; i < side; ++i)
        for (Index j = 0; j < side; ++j) {
            if (splat(i, j) == 0.0) continue;
            for (int a = -2; a <= 2; ++a)
                for (int b = -2; b <= 2; ++b) {
                    const Index r = i + a, c = j + b;
                    if (r >= 0 && r < side && c >= 0 && c < side) blurred(r, c) += splat(i, j) * g(a + 2) * g(b + 2);
                }
        }
    blurred /= blurred.sum();

    BlurKernel k{TensorD(Shape{side, side})};
    Eigen::Map<RowMatrix<double>>(k.values.data(), side, side) = blurred;
    return k;
}

TensorD convolve(const TensorD& x, const BlurKernel& k, ConvolveMode mode)
{
    require_rank(x.shape(), 4, "convolve");
    const Index H = x.dim(2), W = x.dim(3), s = k.side(), r = s / 2;
    if (s > H || s > W)
        throw ContractError("kernel of side " + std::to_string(s) + " larger than image " + x.shape().str());
    if (mode == ConvolveMode::circular_fft) {
        NoGradGuard guard;
        std::vector<TensorD> ks(static_cast<std::size_t>(x.dim(0)), k.values);
        return circular_convolve(Var<double>::constant(x), std::span<const TensorD>(ks)).value();
    }
    TensorD out(x.shape());
    for (Index n = 0; n < x.dim(0); ++n)
        for (Index c = 0; c < x.dim(1); ++c)
            for (Index i = 0; i < H; ++i)
                for (Index j = 0; j < W; ++j) {
                    double acc = 0.0;
                    for (Index u = 0; u < s; ++u) {
                        const Index si = ((i - (u - r)) % H + H) % H;
                        for (Index v = 0; v < s; ++v) {
                            const Index sj = ((j - (v - r)) % W + W) % W;
                            acc += k.values.at(u, v) * x.at(n, c, si, sj);
                        }
                    }
                    out.at(n, c, i, j) = acc;
                }
    return out;
}

void NoiseParams::validate() const
{
    auto bad = [](const std::string& what) { throw ContractError("invalid noise parameters: " + what); };
    if (!(dark_mean >= 0.0)) bad("N_d must be >= 0");
    if (!(read_std >= 0.0)) bad("sigma_r must be >= 0");
    if (!(streak_std >= 0.0 && streak_std < 1.0)) bad("sigma_beta must be in [0, 1)");
    if (!(gain > 0.0)) bad("K must be > 0");
    if (!(attenuation >= 1.0)) bad("M must be >= 1");
    if (!(full_scale > 0.0)) bad("Q must be > 0");
    for (double g : channel_gain)
        if (!(g > 0.0)) bad("channel gains must be > 0");
}

void to_json(nlohmann::json& j, const NoiseParams& p)
{
    j = nlohmann::json{{"dark_mean", p.dark_mean},   {"read_std", p.read_std},
                       {"streak_std", p.streak_std}, {"gain", p.gain},
                       {"attenuation", p.attenuation}, {"full_scale", p.full_scale},
                       {"channel_gain", p.channel_gain}, {"quantize", p.quantize}};
}

void from_json(const nlohmann::json& j, NoiseParams& p)
{
    p.dark_mean = j.at("dark_mean").get<double>();
    p.read_std = j.at("read_std").get<double>();
    p.streak_std = j.at("streak_std").get<double>();
    p.gain = j.at("gain").get<double>();
    p.attenuation = j.at("attenuation").get<double>();
    p.full_scale = j.value("full_scale", 500.0);
    p.channel_gain = j.value("channel_gain", std::array<double, 3>{1.0, 1.0, 1.0});
    p.quantize = j.value("quantize", false);
}

DarkMoments dark_current_moments(double dark_mean)
{
    if (!(dark_mean >= 0.0)) throw ContractError("dark current mean must be >= 0");
    if (dark_mean == 0.0) return {};
    // Tail sum over n > N_d of (n - N_d)^p * Poisson(n; N_d), evaluated in log space.
    const auto first = static_cast<std::int64_t>(std::floor(dark_mean)) + 1;
    const auto last = first + 60 + static_cast<std::int64_t>(20.0 * std::sqrt(dark_mean));
    double m1 = 0.0, m2 = 0.0;
    for (std::int64_t n = first; n <= last; ++n) {
        const double nd = static_cast<double>(n);
        const double p = std::exp(nd * std::log(dark_mean) - dark_mean - std::lgamma(nd + 1.0));
        const double d = nd - dark_mean;
        m1 += d * p;
        m2 += d * d * p;
    }
    return {m1, m2 - m1 * m1};
}

TensorD simulate_noise(const TensorD& y_lin, const NoiseParams& params, std::uint64_t seed)
{
    params.validate();
    require_rank(y_lin.shape(), 4, "simulate_noise");
    // FFT round-off may leave values a few ulps outside [0, 1].
    if ((y_lin.array() < -1e-9).any() || (y_lin.array() > 1.0 + 1e-9).any())
        throw ContractError("simulate_noise expects y_lin in [0, 1]");
    const Index B = y_lin.dim(0), C = y_lin.dim(1), H = y_lin.dim(2), W = y_lin.dim(3);
    Rng streak(split_seed(seed, kStreak)), shot(split_seed(seed, kShot)), dark(split_seed(seed, kDark)),
        read(split_seed(seed, kRead));
    const double Q = params.full_scale;
    TensorD out(y_lin.shape());
    for (Index n = 0; n < B; ++n)
        for (Index c = 0; c < C; ++c) {
            const double k = params.channel_k(c);
            for (Index i = 0; i < H; ++i) {
                // beta_{r,c} is shared by the whole row of one channel.
                const double beta = 1.0 + params.streak_std * streak.normal();
                for (Index j = 0; j < W; ++j) {
                    const double photo = std::max(0.0, Q * y_lin.at(n, c, i, j) / params.attenuation);
                    const auto s = static_cast<double>(shot.poisson(photo));
                    const double d = dark_current(dark.poisson(params.dark_mean), params.dark_mean);
                    const double r = params.read_std * read.normal();
                    double v = k * beta * (s + d + r) / Q;
                    if (params.quantize) v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
                    out.at(n, c, i, j) = v;
                }
            }
        }
    return out;
}

TensorD expected_value(const TensorD& y_lin, const NoiseParams& params)
{
    params.validate();
    require_rank(y_lin.shape(), 4, "expected_value");
    const double ed = dark_current_moments(params.dark_mean).mean, Q = params.full_scale;
    TensorD out(y_lin.shape());
    const Index C = y_lin.dim(1), plane = y_lin.dim(2) * y_lin.dim(3);
    for (Index p = 0; p < y_lin.dim(0) * C; ++p) {
        const double k = params.channel_k(p % C);
        out.array().segment(p * plane, plane) =
            k * (Q * y_lin.array().segment(p * plane, plane) / params.attenuation + ed) / Q;
    }
    return out;
}

TensorD noise_variance(const TensorD& y_lin, const NoiseParams& params)
{
    params.validate();
    require_rank(y_lin.shape(), 4, "noise_variance");
    const auto dm = dark_current_moments(params.dark_mean);
    const double Q = params.full_scale, sb2 = params.streak_std * params.streak_std;
    TensorD out(y_lin.shape());
    const Index C = y_lin.dim(1), plane = y_lin.dim(2) * y_lin.dim(3);
    for (Index p = 0; p < y_lin.dim(0) * C; ++p) {
        const double k = params.channel_k(p % C);
        const auto photo = (Q * y_lin.array().segment(p * plane, plane) / params.attenuation).eval();
        const auto mu = (photo + dm.mean).eval();
        const auto var = (photo + dm.variance + params.read_std * params.read_std).eval();
        // Var[beta X] for independent beta ~ N(1, sb2).
        out.array().segment(p * plane, plane) = k * k / (Q * Q) * ((1.0 + sb2) * (var + mu.square()) - mu.square());
    }
    return out;
}

TensorD apply_saturation(const TensorD& y, double factor)
{
    return TensorD(y.shape(), (factor * y.array()).min(1.0));
}

NoiseParams sample_noise_params(const SamplerConfig& sampler, std::uint64_t seed)
{
    sampler.validate();
    Rng rng(seed);
    NoiseParams p;
    p.dark_mean = rng.uniform(sampler.dark_mean.lo, sampler.dark_mean.hi);
    p.read_std = rng.uniform(sampler.read_std.lo, sampler.read_std.hi);
    p.streak_std = rng.uniform(sampler.streak_std.lo, sampler.streak_std.hi);
    const double k = rng.uniform(sampler.gain.lo, sampler.gain.hi);
    p.gain = sampler.fixed_gain.value_or(k);
    p.attenuation = p.gain; // K = M keeps the synthesized brightness close to the clean image
    p.full_scale = sampler.full_scale;
    p.quantize = sampler.quantize;
    if (sampler.channel_gain_jitter) {
        Rng jitter(split_seed(seed, kJitter));
        for (auto& g : p.channel_gain) g = jitter.uniform(0.95, 1.05);
    }
    return p;
}

DegradedPair synthesize_pair(const TensorD& x, std::uint64_t seed, const SamplerConfig& sampler)
{
    require_rank(x.shape(), 4, "synthesize_pair");
    if (x.dim(0) != 1 || x.dim(1) != 3) throw DimensionError("synthesize_pair expects one RGB image, got " + x.shape().str());
    if ((x.array() < 0.0).any() || (x.array() > 1.0).any()) throw ContractError("synthesize_pair expects x in [0, 1]");
    DegradedPair pair;
    pair.seed = seed;
    pair.x = x;
    pair.k = generate_kernel(split_seed(seed, kKernel), sampler.kernel_min, sampler.kernel_max);
    pair.y_lin = convolve(x, pair.k);
    pair.params = sample_noise_params(sampler, split_seed(seed, kParams));
    const TensorD noisy = simulate_noise(pair.y_lin, pair.params, split_seed(seed, kNoise));
    pair.y = apply_saturation(TensorD(noisy.shape(), noisy.array().max(0.0)), sampler.saturation);
    return pair;
}

void SamplerConfig::validate() const
{
    auto ordered = [](const Range& r, const char* what) {
        if (!(r.lo <= r.hi)) throw ContractError(std::string("sampler range for ") + what + " is not ordered");
    };
    ordered(dark_mean, "dark_mean");
    ordered(read_std, "read_std");
    ordered(streak_std, "streak_std");
    ordered(gain, "gain");
    if (dark_mean.lo < 0 || read_std.lo < 0 || streak_std.lo < 0 || streak_std.hi >= 1.0 || gain.lo < 1.0)
        throw ContractError("sampler ranges outside the valid parameter domain");
    if (fixed_gain && *fixed_gain < 1.0) throw ContractError("fixed gain must be >= 1");
    if (!(full_scale > 0) || !(saturation >= 1.0)) throw ContractError("full_scale must be > 0 and saturation >= 1");
    if (patch < 1 || batch < 1) throw ContractError("patch and batch must be positive");
}

void to_json(nlohmann::json& j, const SamplerConfig& c)
{
    auto range = [](const Range& r) { return nlohmann::json::array({r.lo, r.hi}); };
    j = nlohmann::json{{"dark_mean", range(c.dark_mean)}, {"read_std", range(c.read_std)},
                       {"streak_std", range(c.streak_std)}, {"gain", range(c.gain)},
                       {"full_scale", c.full_scale}, {"saturation", c.saturation},
                       {"channel_gain_jitter", c.channel_gain_jitter}, {"quantize", c.quantize},
                       {"kernel_min", c.kernel_min}, {"kernel_max", c.kernel_max},
                       {"patch", c.patch}, {"batch", c.batch}};
    if (c.fixed_gain) j["fixed_gain"] = *c.fixed_gain;
}

void from_json(const nlohmann::json& j, SamplerConfig& c)
{
    auto range = [&](const char* key, Range& r) {
        if (!j.contains(key)) return;
        const auto v = j.at(key).get<std::vector<double>>();
        if (v.size() != 2) throw ContractError(std::string("sampler range ") + key + " needs two values");
        r = {v[0], v[1]};
    };
    range("dark_mean", c.dark_mean);
    range("read_std", c.read_std);
    range("streak_std", c.streak_std);
    range("gain", c.gain);
    if (j.contains("fixed_gain")) c.fixed_gain = j.at("fixed_gain").get<double>();
    c.full_scale = j.value("full_scale", c.full_scale);
    c.saturation = j.value("saturation", c.saturation);
    c.channel_gain_jitter = j.value("channel_gain_jitter", c.channel_gain_jitter);
    c.quantize = j.value("quantize", c.quantize);
    c.kernel_min = j.value("kernel_min", c.kernel_min);
    c.kernel_max = j.value("kernel_max", c.kernel_max);
    c.patch = j.value("patch", c.patch);
    c.batch = j.value("batch", c.batch);
    c.validate();
}

} // namespace infwide
