#include "helpers.hpp"

#include "infwide/adam.hpp"
#include "infwide/fft.hpp"
#include "infwide/gradcheck.hpp"
#include "infwide/raw_tensor.hpp"
#include "infwide/resample.hpp"

#include <doctest.h>

using namespace infwide;
using test::max_abs_diff;
using test::random_tensor;

TEST_SUITE("tensor_autograd") {

TEST_CASE("tensor shape invariants")
{
    TensorD t(Shape{2, 3, 4, 5});
    CHECK(t.size() == 120);
    CHECK(t.shape().numel() == t.size());
    CHECK_THROWS_AS(TensorD(Shape{2, 2}, TensorD::Array::Zero(3)), DimensionError);
    CHECK_THROWS_AS((void)t.reshaped(Shape{7}), DimensionError);
    auto v = Var<double>::parameter(t);
    backward(sum(v));
    CHECK(v.grad().shape() == v.shape());
}

TEST_CASE("conv2d scalar kernel doubles the input")
{
    const TensorD x = random_tensor(1, Shape{1, 1, 4, 4});
    const auto y = conv2d(Var<double>::constant(x), Var<double>::constant(TensorD(Shape{1, 1, 1, 1}, 2.0)));
    CHECK(max_abs_diff(y.value(), TensorD(x.shape(), 2.0 * x.array())) == 0.0);
}

TEST_CASE("conv2d with a delta kernel is the identity")
{
    const TensorD x = random_tensor(2, Shape{2, 3, 7, 6});
    for (Index k : {1, 3, 5}) {
        TensorD w(Shape{3, 3, k, k});
        for (Index c = 0; c < 3; ++c) w.at(c, c, k / 2, k / 2) = 1.0;
        for (PadMode mode : {PadMode::symmetric, PadMode::zero}) {
            const auto y = conv2d(Var<double>::constant(x), Var<double>::constant(w), 1, Padding{mode, k / 2});
            CHECK(max_abs_diff(y.value(), x) == 0.0);
        }
    }
}

TEST_CASE("conv2d matches a direct cross-correlation and its weight gradient matches finite differences")
{
    const TensorD x = random_tensor(3, Shape{1, 2, 8, 8}, -1, 1);
    const TensorD w = random_tensor(4, Shape{3, 2, 3, 3}, -1, 1);
    const auto y = conv2d(Var<double>::constant(x), Var<double>::constant(w)).value();
    REQUIRE(y.shape() == Shape{1, 3, 6, 6});
    double worst = 0.0;
    for (Index o = 0; o < 3; ++o)
        for (Index i = 0; i < 6; ++i)
            for (Index j = 0; j < 6; ++j) {
                double acc = 0.0;
                for (Index c = 0; c < 2; ++c)
                    for (Index u = 0; u < 3; ++u)
                        for (Index v = 0; v < 3; ++v) acc += w.at(o, c, u, v) * x.at(0, c, i + u, j + v);
                worst = std::max(worst, std::abs(acc - y.at(0, o, i, j)));
            }
    CHECK(worst < 1e-12);

    // d sum(conv(x, w)) / d w[o,c,u,v] = sum of the input window, checked element by element.
    auto wv = Var<double>::parameter(w);
    backward(sum(conv2d(Var<double>::constant(x), wv)));
    const double h = 1e-6;
    for (Index e = 0; e < w.size(); ++e) {
        TensorD wp = w, wm = w;
        wp[e] += h;
        wm[e] -= h;
        NoGradGuard guard;
        const double fp = sum(conv2d(Var<double>::constant(x), Var<double>::constant(wp))).item();
        const double fm = sum(conv2d(Var<double>::constant(x), Var<double>::constant(wm))).item();
        const double fd = (fp - fm) / (2 * h);
        CHECK(std::abs(fd - wv.grad()[e]) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
}

TEST_CASE("conv2d rejects mismatched channels")
{
    const auto x = Var<double>::constant(TensorD(Shape{1, 2, 4, 4}));
    const auto w = Var<double>::constant(TensorD(Shape{1, 3, 3, 3}));
    CHECK_THROWS_AS(conv2d(x, w), DimensionError);
    CHECK_THROWS_AS(conv2d(x, Var<double>::constant(TensorD(Shape{1, 2, 3, 3})), 1, Padding{PadMode::zero, 4}),
                    DimensionError);
}

TEST_CASE("fft2 of a constant image is DC only")
{
    const TensorD x(Shape{5, 6}, 0.7);
    const auto X = fft2(x);
    CHECK(std::abs(X[0] - std::complex<double>(30 * 0.7, 0)) < 1e-12);
    for (Index i = 1; i < X.size(); ++i) CHECK(std::abs(X[i]) < 1e-12);
}

TEST_CASE("fft2 is linear, round-trips and satisfies Parseval")
{
    const TensorD x = random_tensor(5, Shape{16, 16}, -1, 1), y = random_tensor(6, Shape{16, 16}, -1, 1);
    const TensorD z(x.shape(), 2.0 * x.array() - 3.0 * y.array());
    const auto lhs = fft2(z);
    const auto X = fft2(x), Y = fft2(y);
    CHECK((lhs.array() - (2.0 * X.array() - 3.0 * Y.array())).abs().maxCoeff() < 1e-10);

    const TensorD img = random_tensor(7, Shape{1, 3, 32, 32});
    CHECK(max_abs_diff(ifft2(fft2(img)), img) <= 1e-10);

    const double energy = x.array().square().sum();
    const double spectral = X.array().abs2().sum() / 256.0;
    CHECK(std::abs(energy - spectral) <= 1e-8 * energy);

    // Non-power-of-two extents.
    const TensorD odd = random_tensor(8, Shape{9, 15});
    CHECK(max_abs_diff(ifft2(fft2(odd)), odd) <= 1e-10);
}

TEST_CASE("bicubic resampling: constants, extents, odd-extent rejection")
{
    const TensorD c(Shape{1, 2, 8, 6}, 0.37);
    const TensorD d = resample(c, 0.5, Interpolation::bicubic);
    CHECK(d.shape() == Shape{1, 2, 4, 3});
    CHECK((d.array() - 0.37).abs().maxCoeff() < 1e-12);
    CHECK(resample(TensorD(Shape{1, 1, 4, 4}), 0.5).shape() == Shape{1, 1, 2, 2});
    CHECK(resample(TensorD(Shape{1, 1, 4, 4}), 2.0).shape() == Shape{1, 1, 8, 8});
    CHECK_THROWS_AS(resample(TensorD(Shape{1, 1, 5, 4}), 0.5), DimensionError);
    const TensorD u = resample(c, 2.0, Interpolation::bilinear);
    CHECK((u.array() - 0.37).abs().maxCoeff() < 1e-12);
}

TEST_CASE("resample adjoint matches the transpose of the explicit operator")
{
    for (double scale : {0.5, 2.0}) {
        const Shape in{1, 1, 8, 8};
        // Explicit matrix: column e is the response to the e-th basis image.
        const Index n = in.numel();
        const Index m = scale == 0.5 ? 16 : 256;
        Eigen::MatrixXd D(m, n);
        for (Index e = 0; e < n; ++e) {
            TensorD basis(in);
            basis[e] = 1.0;
            D.col(e) = resample(basis, scale, Interpolation::bicubic).array().matrix();
        }
        const TensorD x = random_tensor(9, in, -1, 1);
        const TensorD z = random_tensor(10, Shape{1, 1, scale == 0.5 ? 4 : 16, scale == 0.5 ? 4 : 16}, -1, 1);
        auto xv = Var<double>::parameter(x);
        backward(sum(resample(xv, scale) * Var<double>::constant(z)));
        const Eigen::VectorXd expected = D.transpose() * z.array().matrix();
        CHECK((xv.grad().array().matrix() - expected).cwiseAbs().maxCoeff() < 1e-8);
        const double lhs = (D * x.array().matrix()).dot(z.array().matrix());
        CHECK(std::abs(lhs - xv.grad().array().matrix().dot(x.array().matrix())) < 1e-8);
    }
}

TEST_CASE("elementwise group examples")
{
    NoGradGuard guard;
    auto v = Var<double>::constant(TensorD(Shape{4}, TensorD::Array::LinSpaced(4, -2.0, 1.3)));
    const auto c = clip_min1(v);
    CHECK(c.value()[3] == 1.0);
    CHECK(max_abs_diff(clip_min1(c).value(), c.value()) == 0.0);
    const auto r = relu(Var<double>::constant(TensorD(Shape{2}, TensorD::Array((TensorD::Array(2) << -2.0, 3.0).finished()))));
    CHECK(r.value()[0] == 0.0);
    CHECK(r.value()[1] == 3.0);
    const auto lr = leaky_relu(Var<double>::constant(TensorD(Shape{1}, -1.0)), 0.2);
    CHECK(lr.item() == doctest::Approx(-0.2));
    const auto a = Var<double>::constant(TensorD(Shape{1, 3, 2, 2})), b = Var<double>::constant(TensorD(Shape{1, 16, 2, 2}));
    CHECK(concat_channels<double>({a, b}).dim(1) == 19);
    CHECK_THROWS_AS(add(a, Var<double>::constant(TensorD(Shape{1, 2, 2, 2}))), DimensionError);
    CHECK(mean(Var<double>::constant(TensorD(Shape{3}, 2.0))).item() == 2.0);
    CHECK(abs_sum(Var<double>::constant(TensorD(Shape{2}, -1.5))).item() == 3.0);
}

TEST_CASE("clip_min1 gradient is exactly 0 or 1")
{
    TensorD x = random_tensor(11, Shape{200}, 0.0, 2.0);
    auto v = Var<double>::parameter(x);
    backward(sum(clip_min1(v)));
    for (Index i = 0; i < x.size(); ++i) CHECK(v.grad()[i] == (x[i] > 1.0 ? 0.0 : 1.0));
}

TEST_CASE("backward examples and contract errors")
{
    auto x = Var<double>::parameter(TensorD(Shape{3}, TensorD::Array((TensorD::Array(3) << 1, 2, 3).finished())));
    auto loss = sum(x * x);
    backward(loss);
    CHECK(x.grad()[0] == 2.0);
    CHECK(x.grad()[1] == 4.0);
    CHECK(x.grad()[2] == 6.0);
    CHECK_THROWS_AS(backward(loss), ContractError);

    auto y = Var<double>::parameter(TensorD(Shape{2, 2}, 1.0));
    backward(sum(y));
    CHECK((y.grad().array() == 1.0).all());
    CHECK_THROWS_AS(backward(y * y), ContractError);
    CHECK_THROWS_AS(backward(sum(Var<double>::constant(TensorD(Shape{2})))), ContractError);
}

TEST_CASE("tape order puts inputs before their consumers")
{
    auto a = Var<double>::parameter(TensorD(Shape{2}, 1.0));
    auto b = a * a;
    auto c = b + a;
    auto d = sum(c * b);
    Tape<double> tape(d);
    const auto& nodes = tape.nodes();
    auto pos = [&](const Var<double>& v) {
        return std::find(nodes.begin(), nodes.end(), v.node()) - nodes.begin();
    };
    CHECK(pos(a) < pos(b));
    CHECK(pos(b) < pos(c));
    CHECK(pos(c) < pos(d));
    for (std::size_t i = 0; i < nodes.size(); ++i)
        for (const auto& in : nodes[i]->inputs)
            if (in->requires_grad) CHECK(std::find(nodes.begin(), nodes.begin() + static_cast<long>(i), in) != nodes.begin() + static_cast<long>(i));
}

TEST_CASE("Adam closed-form steps")
{
    const double lr = 1e-3;
    for (double g : {0.5, -3.0, 1e-3}) {
        auto p = Var<double>::parameter(TensorD(Shape{1}, 1.0));
        std::vector<Var<double>> ps{p};
        Adam<double> adam;
        p.mutable_grad()[0] = g;
        adam.step(ps, lr);
        const double delta1 = p.value()[0] - 1.0;
        CHECK(std::abs(delta1 + lr * (g > 0 ? 1 : -1)) <= std::abs(lr * 1e-8 / g) + 1e-15);
        p.mutable_grad()[0] = g;
        const double before = p.value()[0];
        adam.step(ps, lr);
        CHECK(std::abs(p.value()[0] - before) <= lr + 1e-12);
    }
    auto q = Var<double>::parameter(TensorD(Shape{3}, 2.0));
    std::vector<Var<double>> qs{q};
    Adam<double> adam;
    q.mutable_grad();
    adam.step(qs, lr);
    CHECK((q.value().array() == 2.0).all());
    adam.restore(1, {{TensorD(Shape{2}), TensorD(Shape{2})}});
    CHECK_THROWS_AS(adam.step(qs, lr), ContractError);
}

TEST_CASE("every differentiable op passes the finite-difference suite")
{
    GradCheckOptions opts;
    opts.end_to_end = false;
    for (const auto& r : run_gradcheck_suite(opts)) {
        INFO(r.name << " error " << r.error);
        CHECK(r.passed);
    }
}

TEST_CASE("raw tensor files round-trip and reject malformed input")
{
    const auto dir = test::scratch("raw");
    const TensorD t = random_tensor(12, Shape{2, 3, 4});
    save_tensor(dir / "t.rt", t);
    const TensorD back = load_tensor<double>(dir / "t.rt");
    CHECK(back.shape() == t.shape());
    CHECK(max_abs_diff(back, t) < 1e-7);
    const std::string bytes = encode_raw(Shape{2}, {1.0f, 2.0f});
    CHECK(bytes.substr(0, bytes.find('\n')) == R"({"shape":[2],"dtype":"f32"})");
    CHECK_THROWS_AS(decode_raw(bytes.substr(0, bytes.size() - 1)), IoError);
    CHECK_THROWS_AS(decode_raw("not json\n"), IoError);
    CHECK_THROWS_AS(load_tensor<double>(dir / "missing.rt"), IoError);
}

} // TEST_SUITE
