#include "infwide/checkpoint.hpp"
#include "infwide/data.hpp"
#include "infwide/gradcheck.hpp"
#include "infwide/image_io.hpp"
#include "infwide/metrics.hpp"
#include "infwide/random.hpp"
#include "infwide/raw_tensor.hpp"
#include "infwide/scenes.hpp"
#include "infwide/training.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace infwide;

namespace {

nlohmann::json read_json(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

void write_json(const fs::path& path, const nlohmann::json& j)
{
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

bool is_raw(const fs::path& p) { return p.extension() == ".rt"; }

TensorD read_image_any(const fs::path& p)
{
    if (!is_raw(p)) return load_image(p);
    TensorD t = load_tensor<double>(p);
    if (t.rank() == 3) t = t.reshaped(Shape{1, t.dim(0), t.dim(1), t.dim(2)});
    if (t.rank() == 2) t = t.reshaped(Shape{1, 1, t.dim(0), t.dim(1)});
    require_rank(t.shape(), 4, "image");
    return t;
}

struct KernelsArgs {
    int count = 8;
    std::uint64_t seed = 0;
    std::string out;
    int side_min = 13, side_max = 35;
};

int run_kernels(const KernelsArgs& a)
{
    fs::create_directories(a.out);
    for (int i = 0; i < a.count; ++i) {
        const auto k = generate_kernel(split_seed(a.seed, static_cast<std::uint64_t>(i)), a.side_min, a.side_max);
        char stem[32];
        std::snprintf(stem, sizeof stem, "k_%04d", i);
        save_tensor(fs::path(a.out) / (std::string(stem) + ".rt"), k.values);
        TensorD vis = k.values;
        vis.array() /= vis.array().maxCoeff();
        save_image(vis, fs::path(a.out) / (std::string(stem) + ".png"));
    }
    std::cout << "wrote " << a.count << " kernels to " << a.out << '\n';
    return 0;
}

struct SimulateArgs {
    std::string in, out, config;
    std::uint64_t seed = 0;
    std::optional<double> gain;
    int per_image = 1;
    int patch = 0;
};

int run_simulate(const SimulateArgs& a)
{
    SamplerConfig sampler = SamplerConfig::toy();
    if (!a.config.empty()) from_json(read_json(a.config), sampler);
    if (a.gain) sampler.fixed_gain = *a.gain;
    sampler.validate();
    const auto files = list_clean_images(a.in);
    std::uint64_t index = 0;
    int written = 0;
    for (const auto& file : files) {
        TensorD x = load_image(file);
        if (a.patch > 0) {
            if (x.dim(2) < a.patch || x.dim(3) < a.patch) throw ContractError(file.string() + " is smaller than --patch");
            x = crop(x, (x.dim(2) - a.patch) / 2, (x.dim(3) - a.patch) / 2, a.patch, a.patch);
        } else {
            x = crop_to_multiple(x, 16);
        }
        for (int r = 0; r < a.per_image; ++r, ++index) {
            const auto pair = synthesize_pair(x, split_seed(a.seed, index), sampler);
            std::string id = file.stem().string();
            if (a.per_image > 1) id += "_" + std::to_string(r);
            save_pair(fs::path(a.out) / "pairs" / id, pair);
            ++written;
        }
    }
    write_json(fs::path(a.out) / "sampler.json", nlohmann::json(sampler));
    std::cout << "wrote " << written << " pairs to " << (fs::path(a.out) / "pairs").string() << '\n';
    return 0;
}

struct WienerArgs {
    std::string image, kernel, out;
    std::optional<double> nsr;
};

int run_wiener(const WienerArgs& a)
{
    const TensorD y = read_image_any(a.image);
    TensorD k = load_tensor<double>(a.kernel);
    if (k.rank() != 2) throw DimensionError("kernel must be a 2-D raw tensor, got " + k.shape().str());
    k.array() /= k.array().sum();
    const double nsr = a.nsr.value_or(estimate_nsr(y).nsr);
    const TensorD x = wiener_deconvolve(y, k, nsr);
    if (is_raw(a.out))
        save_tensor(a.out, x);
    else
        save_image(x, a.out, 16);
    std::cout << "nsr " << nsr << " -> " << a.out << '\n';
    return 0;
}

struct TrainArgs {
    std::string data, config, out;
    int steps = 200;
    std::uint64_t seed = 0;
    std::string branch, fusion;
    bool no_reblur = false, no_enhance = false;
    int log_every = 10;
};

int run_train(const TrainArgs& a)
{
    TrainOptions o;
    if (!a.config.empty()) from_json(read_json(a.config), o);
    o.steps = a.steps;
    o.seed = a.seed;
    if (!a.branch.empty()) o.net.branch = parse_branch_mode(a.branch);
    if (!a.fusion.empty()) o.net.fusion = parse_fusion_mode(a.fusion);
    if (a.no_reblur) o.reblur_loss = false;
    if (a.no_enhance) o.enhance_loss = false;
    o.net.validate();

    const auto images = load_clean_images(a.data);
    Trainer trainer(o);
    nlohmann::json history = nlohmann::json::array();
    const auto result = trainer.run(images, [&](const StepLog& s) {
        history.push_back({{"step", s.step}, {"lr", s.lr}, {"total", s.loss.total}, {"deblur", s.loss.deblur},
                           {"enhance", s.loss.enhance}, {"reblur", s.loss.reblur}});
        if (a.log_every > 0 && (s.step % a.log_every == 0 || s.step + 1 == trainer.options.steps))
            std::cerr << "step " << s.step << " lr " << s.lr << " loss " << s.loss.total << '\n';
    });
    nlohmann::json summary{{"options", o},
                           {"initial_loss", result.initial.total},
                           {"final_loss", result.final.total},
                           {"seconds", result.seconds},
                           {"images", images.size()}};
    save_checkpoint(a.out, o.net, trainer.store, &trainer.adam, trainer.step, summary);
    summary["history"] = history;
    write_json(fs::path(a.out) / "train_log.json", summary);
    std::cout << "initial_loss " << result.initial.total << '\n' << "final_loss " << result.final.total << '\n';
    return 0;
}

struct EvalArgs {
    std::string data, ckpt, report;
};

int run_eval(const EvalArgs& a)
{
    auto ck = load_checkpoint(a.ckpt);
    std::vector<EvalEntry> entries;
    for (const auto& dir : list_pairs(a.data)) {
        DegradedPair pair = load_pair(dir);
        entries.push_back(evaluate_pair(pair, ck.store, ck.config, dir.filename().string()));
    }
    const auto report = eval_report(entries);
    write_json(a.report, report);
    std::cout << "psnr_mean " << report["psnr_mean"].get<double>() << " ssim_mean " << report["ssim_mean"].get<double>()
              << " (wiener " << report["wiener_psnr_mean"].get<double>() << ")\n";
    return 0;
}

int run_gradcheck(bool network)
{
    GradCheckOptions opts;
    opts.end_to_end = network;
    bool ok = true;
    run_gradcheck_suite(opts, [&](const GradCheckResult& r) {
        ok = ok && r.passed;
        std::printf("%-4s %-24s rel_err %.3e (tol %.0e) %.2fs %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.error,
                    r.tolerance, r.seconds, r.detail.c_str());
        std::fflush(stdout);
    });
    std::cout << (ok ? "gradcheck passed\n" : "gradcheck FAILED\n");
    return ok ? 0 : 1;
}

struct ScenesArgs {
    int count = 16;
    std::uint64_t seed = 0;
    std::string out;
    int size = 128;
};

int run_scenes(const ScenesArgs& a)
{
    const fs::path dir = fs::path(a.out) / "clean";
    fs::create_directories(dir);
    for (int i = 0; i < a.count; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "scene_%04d.png", i);
        save_image(render_scene(split_seed(a.seed, static_cast<std::uint64_t>(i)), a.size, a.size), dir / name, 16);
    }
    std::cout << "wrote " << a.count << " scenes to " << dir.string() << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Low-light non-blind deblurring: degradation synthesis, Wiener deconvolution, training, evaluation"};
    app.require_subcommand(1);

    KernelsArgs ka;
    auto* kernels = app.add_subcommand("kernels", "Generate random camera-shake kernels");
    kernels->add_option("--count", ka.count)->check(CLI::PositiveNumber);
    kernels->add_option("--seed", ka.seed);
    kernels->add_option("--out", ka.out)->required();
    const auto odd_side = CLI::Validator(
        [](std::string& v) { return std::stoi(v) % 2 == 1 ? std::string() : "kernel side must be odd"; }, "ODD");
    kernels->add_option("--min", ka.side_min, "smallest side (odd)")->check(CLI::Range(13, 35) & odd_side);
    kernels->add_option("--max", ka.side_max, "largest side (odd)")->check(CLI::Range(13, 35) & odd_side);

    SimulateArgs sa;
    auto* simulate = app.add_subcommand("simulate", "Synthesize degraded pairs from clean images");
    simulate->add_option("--in", sa.in, "directory with clean/*.png")->required();
    simulate->add_option("--out", sa.out)->required();
    simulate->add_option("--config", sa.config, "sampler JSON");
    simulate->add_option("--seed", sa.seed);
    simulate->add_option("--gain", sa.gain, "fix the camera gain K")->check(CLI::Range(1.0, 1e6));
    simulate->add_option("--pairs-per-image", sa.per_image)->check(CLI::PositiveNumber);
    simulate->add_option("--patch", sa.patch, "centre crop side (default: largest multiple of 16)");

    WienerArgs wa;
    auto* wiener = app.add_subcommand("wiener", "Image-space Wiener deconvolution");
    wiener->add_option("--image", wa.image, "PNG or raw tensor")->required()->check(CLI::ExistingFile);
    wiener->add_option("--kernel", wa.kernel, "raw tensor kernel")->required()->check(CLI::ExistingFile);
    wiener->add_option("--out", wa.out, "PNG (16-bit) or .rt")->required();
    wiener->add_option("--nsr", wa.nsr, "noise-to-signal ratio (default: estimated)")->check(CLI::NonNegativeNumber);

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "Train the toy network");
    train->add_option("--data", ta.data, "directory with clean/*.png")->required();
    train->add_option("--config", ta.config, "network/training JSON");
    train->add_option("--out", ta.out, "checkpoint directory")->required();
    train->add_option("--steps", ta.steps)->check(CLI::NonNegativeNumber);
    train->add_option("--seed", ta.seed);
    train->add_option("--branch", ta.branch)->check(CLI::IsMember({"both", "image", "feature"}));
    train->add_option("--fusion", ta.fusion)->check(CLI::IsMember({"xrfm", "add", "concat"}));
    train->add_flag("--no-reblur-loss", ta.no_reblur);
    train->add_flag("--no-enhance-loss", ta.no_enhance);
    train->add_option("--log-every", ta.log_every);

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on synthesized pairs");
    eval->add_option("--data", ea.data, "directory with pairs/")->required();
    eval->add_option("--ckpt", ea.ckpt)->required();
    eval->add_option("--report", ea.report)->required();

    bool no_network = false;
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
    gradcheck->add_flag("--ops-only", no_network, "skip the end-to-end network check");

    ScenesArgs ca;
    auto* scenes = app.add_subcommand("scenes", "Render procedural night scenes as clean images");
    scenes->add_option("--count", ca.count)->check(CLI::PositiveNumber);
    scenes->add_option("--seed", ca.seed);
    scenes->add_option("--out", ca.out)->required();
    scenes->add_option("--size", ca.size)->check(CLI::Range(16, 4096));

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*kernels) return run_kernels(ka);
        if (*simulate) return run_simulate(sa);
        if (*wiener) return run_wiener(wa);
        if (*train) return run_train(ta);
        if (*eval) return run_eval(ea);
        if (*gradcheck) return run_gradcheck(!no_network);
        if (*scenes) return run_scenes(ca);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
