#include "infwide/gradcheck.hpp"

#include "infwide/losses.hpp"
#include "infwide/network.hpp"
#include "infwide/random.hpp"
#include "infwide/training.hpp"

#include <chrono>
#include <cmath>

namespace infwide {

double check_gradient(const GradFn& f, const std::vector<TensorD>& inputs, std::uint64_t seed, double h,
                      std::vector<double>* per_input)
{
    std::vector<Var<double>> vars;
    for (const auto& t : inputs) vars.push_back(Var<double>::parameter(t));
    backward(f(vars));

    Rng rng(seed);
    double worst = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        TensorD d(inputs[i].shape());
        for (Index e = 0; e < d.size(); ++e) d[e] = rng.normal();
        d.array() /= std::sqrt(d.array().square().sum());
        const double analytic = vars[i].has_grad() ? (vars[i].grad().array() * d.array()).sum() : 0.0;
        auto eval = [&](double sign) {
            NoGradGuard guard;
            std::vector<Var<double>> shifted;
            for (std::size_t j = 0; j < inputs.size(); ++j)
                shifted.push_back(Var<double>::constant(
                    j == i ? TensorD(inputs[j].shape(), inputs[j].array() + sign * h * d.array()) : inputs[j]));
            return f(shifted).item();
        };
        const double numeric = (eval(1.0) - eval(-1.0)) / (2.0 * h);
        const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
        const double err = std::abs(analytic - numeric) / scale;
        if (per_input) per_input->push_back(err);
        worst = std::max(worst, err);
    }
    return worst;
}

namespace {

TensorD random_tensor(Rng& rng, const Shape& s, double lo = -1.0, double hi = 1.0)
{
    TensorD t(s);
    for (Index i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Values bounded away from `kink` so a +-h step never crosses it.
TensorD away_from(Rng& rng, const Shape& s, double kink)
{
    TensorD t(s);
    for (Index i = 0; i < t.size(); ++i) {
        const double u = rng.uniform(-1.0, 1.0);
        t[i] = kink + (u < 0 ? -1.0 : 1.0) * (0.05 + std::abs(u));
    }
    return t;
}

TensorD random_kernel(Rng& rng, Index side)
{
    TensorD k = random_tensor(rng, Shape{side, side}, 0.0, 1.0);
    k.array() /= k.array().sum();
    return k;
}

// Contracts an op's output with fixed random weights so every output element matters.
Var<double> project(const Var<double>& v, std::uint64_t seed)
{
    Rng rng(seed);
    return sum(v * Var<double>::constant(random_tensor(rng, v.shape())));
}

struct Case {
    std::string name;
    // Builds inputs and the function for one of three shape variants.
    std::function<std::pair<std::vector<TensorD>, GradFn>(Rng&, int)> make;
};

std::vector<Case> op_cases()
{
    const std::array<Shape, 3> img{Shape{1, 1, 4, 4}, Shape{2, 3, 6, 5}, Shape{1, 2, 8, 8}};
    auto S = [img](int v) { return img[static_cast<std::size_t>(v)]; };
    auto unary = [S](std::string name, std::function<Var<double>(const Var<double>&)> op,
                     std::function<TensorD(Rng&, const Shape&)> gen) {
        return Case{std::move(name), [S, op, gen](Rng& rng, int v) {
                        return std::make_pair(std::vector<TensorD>{gen(rng, S(v))},
                                              GradFn([op](const std::vector<Var<double>>& in) { return project(op(in[0]), 11); }));
                    }};
    };
    auto plain = [](Rng& rng, const Shape& s) { return random_tensor(rng, s); };
    auto binary = [S](std::string name, std::function<Var<double>(const Var<double>&, const Var<double>&)> op,
                      bool broadcast, double lo) {
        return Case{std::move(name), [S, op, broadcast, lo](Rng& rng, int v) {
                        const Shape a = S(v);
                        const Shape b = broadcast ? Shape{1, a[1], 1, a[3]} : a;
                        return std::make_pair(std::vector<TensorD>{random_tensor(rng, a, lo, 1.0), random_tensor(rng, b, lo, 1.0)},
                                              GradFn([op](const std::vector<Var<double>>& in) { return project(op(in[0], in[1]), 12); }));
                    }};
    };

    std::vector<Case> cases;
    cases.push_back(binary("add", [](auto& a, auto& b) { return add(a, b); }, false, -1.0));
    cases.push_back(binary("add_broadcast", [](auto& a, auto& b) { return add(a, b); }, true, -1.0));
    cases.push_back(binary("sub", [](auto& a, auto& b) { return sub(a, b); }, true, -1.0));
    cases.push_back(binary("mul", [](auto& a, auto& b) { return mul(a, b); }, true, -1.0));
    cases.push_back(binary("div", [](auto& a, auto& b) { return div(a, b); }, true, 0.5));
    cases.push_back(unary("scalar_mul", [](auto& a) { return scalar_mul(a, -1.7); }, plain));
    cases.push_back(unary("add_scalar", [](auto& a) { return square(add_scalar(a, 0.3)); }, plain));
    cases.push_back(unary("leaky_relu", [](auto& a) { return leaky_relu(a, 0.2); },
                          [](Rng& r, const Shape& s) { return away_from(r, s, 0.0); }));
    cases.push_back(unary("relu", [](auto& a) { return relu(a); }, [](Rng& r, const Shape& s) { return away_from(r, s, 0.0); }));
    cases.push_back(unary("clip_min1", [](auto& a) { return clip_min1(a); },
                          [](Rng& r, const Shape& s) { return away_from(r, s, 1.0); }));
    cases.push_back(unary("abs", [](auto& a) { return abs(a); }, [](Rng& r, const Shape& s) { return away_from(r, s, 0.0); }));
    cases.push_back(unary("square", [](auto& a) { return square(a); }, plain));
    cases.push_back(unary("sqrt", [](auto& a) { return sqrt(a); },
                          [](Rng& r, const Shape& s) { return random_tensor(r, s, 0.2, 2.0); }));
    cases.push_back(unary("sum", [](auto& a) { return scalar_mul(square(sum(a)), 0.5); }, plain));
    cases.push_back(unary("mean", [](auto& a) { return square(mean(a)); }, plain));
    cases.push_back(unary("abs_sum", [](auto& a) { return abs_sum(a); },
                          [](Rng& r, const Shape& s) { return away_from(r, s, 0.0); }));
    cases.push_back(unary("reshape", [](auto& a) { return square(reshape(a, Shape{a.size()})); }, plain));
    cases.push_back(unary("concat_slice", [](auto& a) {
        auto c = concat_channels<double>({a, square(a), a});
        return slice_channels(c, 1, c.dim(1) - 1);
    }, plain));
    cases.push_back(unary("pad_zero", [](auto& a) { return pad(a, Padding{PadMode::zero, 2}); }, plain));
    cases.push_back(unary("pad_symmetric", [](auto& a) { return pad(a, Padding{PadMode::symmetric, 3}); }, plain));
    cases.push_back(unary("upsample_nearest2x", [](auto& a) { return upsample_nearest2x(a); }, plain));
    cases.push_back(unary("resample_bicubic_down", [](auto& a) { return resample(a, 0.5, Interpolation::bicubic); },
                          [](Rng& r, const Shape& s) { return random_tensor(r, Shape{s[0], s[1], s[2] / 2 * 2, s[3] / 2 * 2}); }));
    cases.push_back(unary("resample_bilinear_up", [](auto& a) { return resample(a, 2.0, Interpolation::bilinear); }, plain));
    cases.push_back(unary("resample_bicubic_up", [](auto& a) { return resample(a, 2.0, Interpolation::bicubic); }, plain));

    const std::array<std::array<Index, 4>, 3> conv_geom{{{1, 1, 1, 0}, {3, 3, 1, 1}, {3, 2, 2, 0}}}; // cout, k, stride, sym
    cases.push_back(Case{"conv2d", [S, conv_geom](Rng& rng, int v) {
                             const auto g = conv_geom[static_cast<std::size_t>(v)];
                             const Shape in = S(v);
                             const Index k = g[1];
                             std::vector<TensorD> x{random_tensor(rng, in), random_tensor(rng, Shape{g[0], in[1], k, k})};
                             const Padding p{g[3] ? PadMode::symmetric : PadMode::zero, k / 2};
                             const Index stride = g[2];
                             return std::make_pair(x, GradFn([p, stride](const std::vector<Var<double>>& a) {
                                                       return project(conv2d(a[0], a[1], stride, p), 13);
                                                   }));
                         }});
    cases.push_back(Case{"conv2d_strided_down", [S](Rng& rng, int v) {
                             const Shape in{S(v)[0], S(v)[1], 8, 8};
                             std::vector<TensorD> x{random_tensor(rng, in), random_tensor(rng, Shape{4, in[1], 2, 2})};
                             return std::make_pair(x, GradFn([](const std::vector<Var<double>>& a) {
                                                       return project(conv2d(a[0], a[1], 2, Padding{}), 14);
                                                   }));
                         }});
    cases.push_back(Case{"circular_convolve", [S](Rng& rng, int v) {
                             const Shape in = S(v);
                             std::vector<TensorD> ks;
                             for (Index n = 0; n < in[0]; ++n) ks.push_back(random_kernel(rng, 3));
                             return std::make_pair(std::vector<TensorD>{random_tensor(rng, in)},
                                                   GradFn([ks](const std::vector<Var<double>>& a) {
                                                       return project(circular_convolve(a[0], std::span<const TensorD>(ks)), 15);
                                                   }));
                         }});
    cases.push_back(Case{"wiener_deconvolve", [S](Rng& rng, int v) {
                             const Shape in = S(v);
                             std::vector<TensorD> ks;
                             std::vector<double> nsr;
                             for (Index n = 0; n < in[0]; ++n) {
                                 ks.push_back(random_kernel(rng, 3));
                                 nsr.push_back(rng.uniform(1e-3, 1e-1));
                             }
                             return std::make_pair(std::vector<TensorD>{random_tensor(rng, in)},
                                                   GradFn([ks, nsr](const std::vector<Var<double>>& a) {
                                                       return project(wiener_deconvolve(a[0], std::span<const TensorD>(ks),
                                                                                        std::span<const double>(nsr)),
                                                                      16);
                                                   }));
                         }});

    // Losses on 8x8 images with 3 channels, per the loss contracts.
    const std::array<Shape, 3> lshape{Shape{1, 3, 8, 8}, Shape{2, 3, 8, 8}, Shape{1, 1, 12, 12}};
    auto L = [lshape](int v) { return lshape[static_cast<std::size_t>(v)]; };
    auto loss2 = [L](std::string name, std::function<Var<double>(const Var<double>&, const Var<double>&)> op) {
        return Case{std::move(name), [L, op](Rng& rng, int v) {
                        return std::make_pair(std::vector<TensorD>{random_tensor(rng, L(v), 0.0, 1.0), random_tensor(rng, L(v), 0.0, 1.0)},
                                              GradFn([op](const std::vector<Var<double>>& a) { return op(a[0], a[1]); }));
                    }};
    };
    cases.push_back(loss2("l1_loss", [](auto& a, auto& b) { return l1_loss(a, b); }));
    cases.push_back(loss2("l2_loss", [](auto& a, auto& b) { return l2_loss(a, b); }));
    cases.push_back(loss2("l2_loss_root", [](auto& a, auto& b) { return l2_loss(a, b, L2Mode::root); }));
    cases.push_back(loss2("tv", [](auto& a, auto&) { return tv(a); }));
    cases.push_back(loss2("ssim", [](auto& a, auto& b) { return ssim(a, b, SsimOptions::fitted(std::min(a.dim(2), a.dim(3)))); }));
    cases.push_back(loss2("ssim_loss", [](auto& a, auto& b) { return ssim_loss(a, b); }));
    cases.push_back(loss2("deblur_loss", [](auto& a, auto& b) {
        const std::vector<Var<double>> outs{a, resample(a, 0.5, Interpolation::bicubic)};
        return deblur_loss<double>(std::span<const Var<double>>(outs), b);
    }));
    cases.push_back(Case{"enhance_loss", [L](Rng& rng, int v) {
                             const Shape s = L(v);
                             std::vector<TensorD> ks;
                             for (Index n = 0; n < s[0]; ++n) ks.push_back(random_kernel(rng, 5));
                             // The clean image is a target, not a differentiable input.
                             const auto x = Var<double>::constant(random_tensor(rng, s, 0.0, 1.0));
                             return std::make_pair(std::vector<TensorD>{random_tensor(rng, s, 0.0, 1.2)},
                                                   GradFn([ks, x](const std::vector<Var<double>>& a) {
                                                       return enhance_loss(a[0], x, std::span<const TensorD>(ks));
                                                   }));
                         }});
    cases.push_back(Case{"reblur_loss", [L](Rng& rng, int v) {
                             const Shape s = L(v);
                             std::vector<TensorD> ks;
                             for (Index n = 0; n < s[0]; ++n) ks.push_back(random_kernel(rng, 5));
                             return std::make_pair(std::vector<TensorD>{random_tensor(rng, s, 0.0, 1.0), random_tensor(rng, s, 0.0, 1.0)},
                                                   GradFn([ks](const std::vector<Var<double>>& a) {
                                                       return reblur_loss(a[0], a[1], std::span<const TensorD>(ks));
                                                   }));
                         }});
    cases.push_back(loss2("total_loss", [](auto& a, auto& b) {
        return total_loss(l1_loss(a, b), tv(a), square(mean(a - b)));
    }));
    return cases;
}

} // namespace

std::vector<GradCheckResult> run_gradcheck_suite(const GradCheckOptions& opts,
                                                 const std::function<void(const GradCheckResult&)>& progress)
{
    std::vector<GradCheckResult> results;
    auto finish = [&](GradCheckResult r) {
        r.passed = std::isfinite(r.error) && r.error <= r.tolerance;
        if (progress) progress(r);
        results.push_back(std::move(r));
    };
    std::uint64_t counter = 0;
    for (const auto& c : op_cases()) {
        const auto start = std::chrono::steady_clock::now();
        GradCheckResult r{c.name, 0.0, opts.op_tolerance, false, 0.0, {}};
        for (int v = 0; v < 3; ++v) {
            Rng rng(split_seed(opts.seed, ++counter));
            auto [inputs, f] = c.make(rng, v);
            r.error = std::max(r.error, check_gradient(f, inputs, split_seed(opts.seed, ++counter)));
        }
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        finish(r);
    }

    if (opts.end_to_end) {
        const auto start = std::chrono::steady_clock::now();
        GradCheckResult r{"infwide_end_to_end", 0.0, opts.network_tolerance, false, 0.0, {}};
        NetworkConfig cfg;
        auto store = init_network<double>(cfg, split_seed(opts.seed, 99), InitMode::generic);
        Rng rng(split_seed(opts.seed, 100));
        const Shape s{2, 3, 16, 16};
        TensorD x = random_tensor(rng, s, 0.0, 1.0);
        std::vector<TensorD> ks{random_kernel(rng, 7), random_kernel(rng, 5)};
        TensorD y_lin, y;
        {
            NoGradGuard guard;
            y_lin = circular_convolve(Var<double>::constant(x), std::span<const TensorD>(ks)).value();
        }
        y = TensorD(s, (1.2 * y_lin.array() + 0.05 * random_tensor(rng, s).array()).max(0.0).min(1.0));

        std::vector<std::string> names;
        std::vector<TensorD> values;
        for (const auto& [name, p] : store.named()) {
            names.push_back(name);
            values.push_back(p.value());
        }
        const BatchT<double> batch{Var<double>::constant(x), Var<double>::constant(y), Var<double>::constant(y_lin), ks};
        const LossWeights w;
        GradFn f = [&](const std::vector<Var<double>>& params) {
            for (std::size_t i = 0; i < names.size(); ++i) store.named()[names[i]] = params[i];
            const auto out = infwide_forward(batch.y, std::span<const TensorD>(ks), store, cfg);
            return objective(out, batch, w, true, true);
        };
        std::vector<double> errors;
        r.error = check_gradient(f, values, split_seed(opts.seed, 101), 1e-6, &errors);
        const auto worst = std::max_element(errors.begin(), errors.end()) - errors.begin();
        r.detail = std::to_string(names.size()) + " parameter tensors, worst " + names[static_cast<std::size_t>(worst)];
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        finish(r);
    }
    return results;
}

} // namespace infwide
