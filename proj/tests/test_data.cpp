#include "helpers.hpp"

#include "infwide/checkpoint.hpp"
#include "infwide/data.hpp"
#include "infwide/image_io.hpp"
#include "infwide/raw_tensor.hpp"
#include "infwide/scenes.hpp"
#include "infwide/training.hpp"

#include <doctest.h>

#include <fstream>

using namespace infwide;
using test::max_abs_diff;
using test::random_tensor;
namespace fs = std::filesystem;

TEST_SUITE("data_pipeline") {

TEST_CASE("16-bit PNG round trip stays within one quantization step")
{
    const auto dir = test::scratch("png16");
    const TensorD img = random_tensor(1, Shape{1, 3, 17, 23});
    save_image(img, dir / "a.png", 16);
    const TensorD back = load_image(dir / "a.png");
    CHECK(back.shape() == img.shape());
    CHECK(max_abs_diff(back, img) <= 1.0 / 65535);

    save_image(img, dir / "b.png", 8);
    CHECK(max_abs_diff(load_image(dir / "b.png"), img) <= 0.5 / 255 + 1e-12);

    TensorD wide = img;
    wide.array() = wide.array() * 2.0 - 0.5;
    save_image(wide, dir / "c.png", 16);
    const TensorD clamped = load_image(dir / "c.png");
    CHECK(clamped.array().minCoeff() >= 0.0);
    CHECK(clamped.array().maxCoeff() <= 1.0);
    CHECK_THROWS_AS(save_image(img, dir / "d.png", 12), ContractError);
}

TEST_CASE("grayscale PNG is replicated to three channels")
{
    const auto dir = test::scratch("gray");
    const TensorD gray = random_tensor(2, Shape{1, 1, 9, 12});
    save_image(gray, dir / "g.png", 16);
    const TensorD rgb = load_image(dir / "g.png");
    REQUIRE(rgb.shape() == Shape{1, 3, 9, 12});
    for (Index c = 0; c < 3; ++c)
        for (Index i = 0; i < 9; ++i)
            for (Index j = 0; j < 12; ++j) CHECK(std::abs(rgb.at(0, c, i, j) - gray.at(0, 0, i, j)) <= 1.0 / 65535);
    save_image(gray.reshaped(Shape{9, 12}), dir / "h.png", 8);
    CHECK(load_image(dir / "h.png").shape() == Shape{1, 3, 9, 12});
}

TEST_CASE("non-PNG and missing files raise I/O errors naming the path")
{
    const auto dir = test::scratch("badpng");
    std::ofstream(dir / "fake.png") << "GIF89a definitely not a png";
    CHECK_THROWS_AS(load_image(dir / "fake.png"), IoError);
    try {
        load_image(dir / "fake.png");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("fake.png") != std::string::npos);
    }
    CHECK_THROWS_AS(load_image(dir / "missing.png"), IoError);
    std::string truncated = "\x89PNG\r\n\x1a\n";
    std::ofstream(dir / "trunc.png", std::ios::binary) << truncated;
    CHECK_THROWS_AS(load_image(dir / "trunc.png"), IoError);
}

TEST_CASE("clean image listing and cropping")
{
    const auto dir = test::scratch("clean");
    CHECK_THROWS_AS(list_clean_images(dir), IoError);
    fs::create_directories(dir / "clean");
    save_image(render_scene(1, 40, 50), dir / "clean" / "b.png", 16);
    save_image(render_scene(2, 40, 50), dir / "clean" / "a.png", 16);
    std::ofstream(dir / "clean" / "notes.txt") << "x";
    const auto files = list_clean_images(dir);
    REQUIRE(files.size() == 2);
    CHECK(files[0].filename() == "a.png");
    CHECK(load_clean_images(dir).size() == 2);

    const TensorD img = random_tensor(3, Shape{1, 3, 40, 50});
    const TensorD c = crop_to_multiple(img, 16);
    CHECK(c.shape() == Shape{1, 3, 32, 48});
    CHECK(c.at(0, 1, 0, 0) == img.at(0, 1, 4, 1));
    CHECK(crop(img, 2, 3, 5, 6).at(0, 2, 1, 1) == img.at(0, 2, 3, 4));
    CHECK_THROWS_AS(crop(img, 38, 0, 5, 5), DimensionError);
    CHECK_THROWS_AS(crop_to_multiple(img, 64), DimensionError);
}

TEST_CASE("random patches avoid flat regions")
{
    TensorD img(Shape{1, 3, 128, 128}, 0.5);
    const TensorD tex = random_tensor(4, Shape{1, 3, 128, 40});
    for (Index c = 0; c < 3; ++c)
        for (Index i = 0; i < 128; ++i)
            for (Index j = 88; j < 128; ++j) img.at(0, c, i, j) = tex.at(0, c, i, j - 88);
    const std::vector<TensorD> imgs{img};
    int textured = 0;
    for (std::uint64_t s = 0; s < 50; ++s) {
        const TensorD p = random_patch(imgs, 32, s);
        const double m = p.array().mean();
        textured += std::sqrt((p.array() - m).square().mean()) >= kMinCropStd;
    }
    CHECK(textured >= 45);
    CHECK_THROWS_AS(random_patch(imgs, 200, 0), ContractError);
    CHECK_THROWS_AS(random_patch({}, 8, 0), ContractError);
}

TEST_CASE("batches: default size, determinism, stacking")
{
    const std::vector<TensorD> imgs{render_scene(5, 96, 96), render_scene(6, 80, 112)};
    SamplerConfig cfg = SamplerConfig::toy();
    CHECK(cfg.batch == 8);
    CHECK(SamplerConfig{}.patch == 256);
    cfg.patch = 48;
    const auto a = make_batch(imgs, cfg, 7), b = make_batch(imgs, cfg, 7);
    REQUIRE(a.size() == 8);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(max_abs_diff(a[i].y, b[i].y) == 0.0);
        CHECK(max_abs_diff(a[i].x, b[i].x) == 0.0);
        CHECK(a[i].x.shape() == Shape{1, 3, 48, 48});
    }
    CHECK(max_abs_diff(make_batch(imgs, cfg, 8)[0].y, a[0].y) > 0.0);
    const Batch st = stack(a);
    CHECK(st.x.shape() == Shape{8, 3, 48, 48});
    CHECK(st.kernels.size() == 8);
    CHECK(st.y.at(3, 1, 5, 6) == static_cast<float>(a[3].y.at(0, 1, 5, 6)));
}

TEST_CASE("sampled parameters stay inside the configured ranges")
{
    const SamplerConfig cfg;
    double kmin = 1e9, kmax = -1e9;
    for (std::uint64_t s = 0; s < 100000; ++s) {
        const NoiseParams p = sample_noise_params(cfg, s);
        kmin = std::min(kmin, p.gain);
        kmax = std::max(kmax, p.gain);
        if (s < 10000) {
            CHECK(p.dark_mean >= 2.0);
            CHECK(p.dark_mean <= 8.0);
            CHECK(p.read_std >= 0.5);
            CHECK(p.read_std <= 4.0);
            CHECK(p.attenuation == p.gain);
        }
        CHECK(p.streak_std >= 0.01);
        CHECK(p.streak_std <= 0.03);
    }
    CHECK(kmin >= 4.0);
    CHECK(kmax <= 16.0);
    CHECK(kmin < 4.01);
    CHECK(kmax > 15.99);
    CHECK(sample_noise_params(cfg, 9).gain == sample_noise_params(cfg, 9).gain);

    SamplerConfig fixed;
    fixed.fixed_gain = 8.0;
    CHECK(sample_noise_params(fixed, 3).gain == 8.0);
    SamplerConfig jitter;
    jitter.channel_gain_jitter = true;
    for (double g : sample_noise_params(jitter, 4).channel_gain) {
        CHECK(g >= 0.95);
        CHECK(g <= 1.05);
    }
    SamplerConfig bad;
    bad.gain = {8.0, 4.0};
    CHECK_THROWS_AS(bad.validate(), ContractError);
}

TEST_CASE("sampler configuration JSON round trip")
{
    SamplerConfig c = SamplerConfig::toy();
    c.fixed_gain = 4.0;
    c.quantize = true;
    const nlohmann::json j = c;
    const auto back = j.get<SamplerConfig>();
    CHECK(back.patch == 64);
    CHECK(back.fixed_gain.value_or(0.0) == 4.0);
    CHECK(back.quantize);
    CHECK(back.gain.hi == 16.0);
}

TEST_CASE("degraded pair storage round trip")
{
    const auto dir = test::scratch("pairs");
    const DegradedPair p = synthesize_pair(render_scene(9, 48, 48), 10, SamplerConfig{});
    save_pair(dir / "pairs" / "0000", p);
    for (const char* f : {"x.png", "y.png", "x.rt", "y.rt", "y_lin.rt", "k.rt", "meta.json"})
        CHECK(fs::exists(dir / "pairs" / "0000" / f));
    const DegradedPair q = load_pair(dir / "pairs" / "0000");
    CHECK(q.seed == p.seed);
    CHECK(q.params.gain == p.params.gain);
    CHECK(q.params.dark_mean == p.params.dark_mean);
    CHECK(max_abs_diff(q.x, p.x) <= 1e-7);
    CHECK(max_abs_diff(q.y, p.y) <= 1e-7);
    CHECK(max_abs_diff(q.y_lin, p.y_lin) <= 1e-7);
    CHECK(max_abs_diff(q.k.values, p.k.values) <= 1e-8);
    CHECK_NOTHROW(q.k.validate());
    CHECK(list_pairs(dir).size() == 1);
    CHECK_THROWS_AS(load_pair(dir), IoError);
}

TEST_CASE("checkpoint round trip with optimizer state")
{
    const auto dir = test::scratch("ckpt");
    NetworkConfig cfg;
    cfg.base_channels = 4;
    cfg.unet_depth = 2;
    auto store = init_network<float>(cfg, 11);
    Adam<float> adam;
    auto params = store.list();
    for (auto& p : params) p.mutable_grad().array() = 0.01f;
    adam.step(params, 1e-3);
    save_checkpoint(dir, cfg, store, &adam, 1, {{"note", "x"}});
    const Checkpoint ck = load_checkpoint(dir);
    CHECK(ck.config.hash() == cfg.hash());
    CHECK(ck.step == 1);
    CHECK(ck.adam_steps == 1);
    CHECK(ck.extra.at("note") == "x");
    REQUIRE(ck.store.named().size() == store.named().size());
    for (const auto& [name, p] : store.named())
        CHECK((ck.store.named().at(name).value().array() == p.value().array()).all());
    REQUIRE(ck.moments.size() == adam.moments().size());
    CHECK((ck.moments[0].v.array() == adam.moments()[0].v.array()).all());

    // A manifest whose config no longer matches its hash is rejected.
    std::ifstream in(dir / "manifest.json");
    nlohmann::json m;
    in >> m;
    in.close();
    m["config"]["base_channels"] = 8;
    std::ofstream(dir / "manifest.json") << m.dump();
    CHECK_THROWS_AS(load_checkpoint(dir), IoError);
    CHECK_THROWS_AS(load_checkpoint(dir / "nowhere"), IoError);
}

TEST_CASE("learning-rate schedule halves every 50 epochs")
{
    TrainOptions o;
    CHECK(learning_rate(o, 0, 16) == 2e-4);
    CHECK(learning_rate(o, 99, 16) == 2e-4);
    CHECK(learning_rate(o, 100, 16) == 1e-4);
    CHECK(learning_rate(o, 200, 16) == 5e-5);
    CHECK(learning_rate(o, 49, 3) == 2e-4);
    CHECK(learning_rate(o, 50, 3) == 1e-4);
}

TEST_CASE("training options JSON")
{
    const auto j = nlohmann::json::parse(R"({"network": {"base_channels": 8, "fusion": "add"},
        "sampler": {"patch": 32}, "steps": 5, "seed": 3, "loss": {"l2": "root", "use_reblur": false}})");
    const auto o = j.get<TrainOptions>();
    CHECK(o.net.base_channels == 8);
    CHECK(o.net.fusion == FusionMode::add);
    CHECK(o.sampler.patch == 32);
    CHECK(o.steps == 5);
    CHECK(o.seed == 3);
    CHECK(o.weights.l2 == L2Mode::root);
    CHECK_FALSE(o.reblur_loss);
    CHECK(o.enhance_loss);
    CHECK_THROWS(nlohmann::json::parse(R"({"loss": {"l2": "cubic"}})").get<TrainOptions>());
}

TEST_CASE("evaluation report schema")
{
    std::vector<EvalEntry> e{{"a", 4.0, 20.0, 0.5, 18.0, 0.4}, {"b", 8.0, 22.0, 0.7, 19.0, 0.5},
                             {"c", 8.0, 24.0, 0.9, 21.0, 0.6}};
    const auto r = eval_report(e);
    CHECK(r.at("schema") == 1);
    CHECK(r.at("count") == 3);
    CHECK(r.at("psnr_mean").get<double>() == doctest::Approx(22.0));
    CHECK(r.at("ssim_mean").get<double>() == doctest::Approx(0.7));
    CHECK(r.at("per_image").size() == 3);
    CHECK(r.at("gain").contains("8"));
    CHECK(r.at("gain").at("8").at("psnr_mean").get<double>() == doctest::Approx(23.0));
    CHECK_THROWS_AS(eval_report({}), ContractError);
}

} // TEST_SUITE
