#include "helpers.hpp"

#include "infwide/image_io.hpp"
#include "infwide/raw_tensor.hpp"
#include "infwide/scenes.hpp"

#include <doctest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace infwide;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args)
{
    const std::string cmd = std::string(INFWIDE_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

} // namespace

TEST_SUITE("cli") {

TEST_CASE("argument errors exit 2, runtime errors exit 1")
{
    const auto dir = test::scratch("cli_codes");
    CHECK(run("") == 2);
    CHECK(run("frobnicate") == 2);
    CHECK(run("kernels") == 2);
    CHECK(run("kernels --out " + dir.string() + " --min 14") == 2);
    CHECK(run("train --data " + dir.string() + " --out x --branch sideways") == 2);
    CHECK(run("wiener --image /nonexistent.png --kernel /nonexistent.rt --out x.png") == 2);
    CHECK(run("--help") == 0);
    std::ofstream(dir / "bad.png") << "not an image";
    save_tensor(dir / "k.rt", TensorD(Shape{1, 1}, 1.0));
    CHECK(run("wiener --image " + (dir / "bad.png").string() + " --kernel " + (dir / "k.rt").string() + " --out " +
              (dir / "o.png").string()) == 1);
    CHECK(run("eval --data " + dir.string() + " --ckpt " + dir.string() + " --report r.json") == 1);
}

TEST_CASE("wiener with a delta kernel reproduces the input after 16-bit quantization")
{
    const auto dir = test::scratch("cli_wiener");
    save_image(render_scene(3, 48, 40), dir / "in.png", 16);
    TensorD delta(Shape{13, 13});
    delta.at(6, 6) = 1.0;
    save_tensor(dir / "delta.rt", delta);
    REQUIRE(run("wiener --image " + (dir / "in.png").string() + " --kernel " + (dir / "delta.rt").string() + " --out " +
                (dir / "out.png").string() + " --nsr 0") == 0);
    const TensorD a = load_image(dir / "in.png"), b = load_image(dir / "out.png");
    REQUIRE(a.shape() == b.shape());
    CHECK((a.array() == b.array()).all());
    CHECK(slurp(dir / "in.png") == slurp(dir / "out.png"));

    REQUIRE(run("wiener --image " + (dir / "in.png").string() + " --kernel " + (dir / "delta.rt").string() + " --out " +
                (dir / "out.rt").string()) == 0);
    CHECK(load_tensor<double>(dir / "out.rt").shape() == a.shape());
}

TEST_CASE("kernels, scenes, simulate, train and eval work end to end")
{
    const auto dir = test::scratch("cli_flow");
    REQUIRE(run("kernels --count 3 --seed 4 --min 13 --max 15 --out " + (dir / "k").string()) == 0);
    for (const char* f : {"k_0000.rt", "k_0000.png", "k_0002.rt"}) CHECK(fs::exists(dir / "k" / f));
    const TensorD k = load_tensor<double>(dir / "k" / "k_0001.rt");
    CHECK(std::abs(k.array().sum() - 1.0) <= 1e-5);

    REQUIRE(run("scenes --count 2 --seed 1 --size 48 --out " + (dir / "data").string()) == 0);
    REQUIRE(run("simulate --in " + (dir / "data").string() + " --out " + (dir / "test").string() +
                " --seed 2 --gain 8") == 0);
    CHECK(fs::exists(dir / "test" / "sampler.json"));
    CHECK(fs::exists(dir / "test" / "pairs" / "scene_0000" / "y_lin.rt"));

    std::ofstream(dir / "net.json") << R"({"network": {"base_channels": 4, "unet_depth": 2, "resblocks_per_level": 1,
        "fm_feature_count": 4}, "sampler": {"patch": 32, "batch": 2, "kernel_max": 15}})";
    REQUIRE(run("train --data " + (dir / "data").string() + " --config " + (dir / "net.json").string() + " --out " +
                (dir / "ckpt").string() + " --steps 2 --seed 5") == 0);
    CHECK(fs::exists(dir / "ckpt" / "manifest.json"));
    CHECK(fs::exists(dir / "ckpt" / "train_log.json"));

    REQUIRE(run("eval --data " + (dir / "test").string() + " --ckpt " + (dir / "ckpt").string() + " --report " +
                (dir / "report.json").string()) == 0);
    std::ifstream in(dir / "report.json");
    const auto report = nlohmann::json::parse(in);
    CHECK(report.at("schema") == 1);
    for (const char* key : {"psnr_mean", "ssim_mean", "per_image", "gain"}) CHECK(report.contains(key));
    CHECK(report.at("per_image").size() == 2);
    CHECK(report.at("gain").contains("8"));
}

TEST_CASE("simulate is byte-identical across runs with one seed")
{
    const auto dir = test::scratch("cli_det");
    REQUIRE(run("scenes --count 1 --seed 9 --size 48 --out " + (dir / "data").string()) == 0);
    for (const char* out : {"a", "b"})
        REQUIRE(run("simulate --in " + (dir / "data").string() + " --out " + (dir / out).string() + " --seed 3") == 0);
    for (const char* f : {"x.rt", "y.rt", "y_lin.rt", "k.rt"})
        CHECK(slurp(dir / "a" / "pairs" / "scene_0000" / f) == slurp(dir / "b" / "pairs" / "scene_0000" / f));
}

TEST_CASE("gradcheck subcommand passes on the op suite")
{
    CHECK(run("gradcheck --ops-only") == 0);
}

} // TEST_SUITE
