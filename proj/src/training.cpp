#include "infwide/training.hpp"

#include "infwide/metrics.hpp"
#include "infwide/random.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

namespace infwide {

namespace {

constexpr std::uint64_t kInitStream = 0x1a17;
constexpr std::uint64_t kProbeStream = 0x9806e;
constexpr std::uint64_t kBatchStream = 0xba7c4;

Tensor<float> clamp01(const Tensor<float>& t) { return Tensor<float>(t.shape(), t.array().max(0.0f).min(1.0f)); }

} // namespace

void to_json(nlohmann::json& j, const TrainOptions& o)
{
    j = nlohmann::json{{"network", o.net},
                       {"sampler", o.sampler},
                       {"loss",
                        {{"deblur", o.weights.deblur},
                         {"enhance", o.weights.enhance},
                         {"reblur", o.weights.reblur},
                         {"deblur_terms", o.weights.deblur_terms},
                         {"enhance_terms", o.weights.enhance_terms},
                         {"l2", o.weights.l2 == L2Mode::squared ? "squared" : "root"},
                         {"use_enhance", o.enhance_loss},
                         {"use_reblur", o.reblur_loss}}},
                       {"adam", {{"lr", o.adam.lr}, {"beta1", o.adam.beta1}, {"beta2", o.adam.beta2}, {"eps", o.adam.eps}}},
                       {"halve_every_epochs", o.halve_every_epochs},
                       {"steps", o.steps},
                       {"seed", o.seed}};
}

void from_json(const nlohmann::json& j, TrainOptions& o)
{
    // A bare network config is accepted as well.
    if (j.contains("network"))
        o.net = j.at("network").get<NetworkConfig>();
    else if (j.contains("base_channels") || j.contains("fusion") || j.contains("branch"))
        o.net = j.get<NetworkConfig>();
    if (j.contains("sampler")) {
        SamplerConfig s = SamplerConfig::toy();
        from_json(j.at("sampler"), s);
        o.sampler = s;
    }
    if (j.contains("loss")) {
        const auto& l = j.at("loss");
        o.weights.deblur = l.value("deblur", o.weights.deblur);
        o.weights.enhance = l.value("enhance", o.weights.enhance);
        o.weights.reblur = l.value("reblur", o.weights.reblur);
        o.weights.deblur_terms = l.value("deblur_terms", o.weights.deblur_terms);
        o.weights.enhance_terms = l.value("enhance_terms", o.weights.enhance_terms);
        const auto l2 = l.value("l2", std::string("squared"));
        if (l2 != "squared" && l2 != "root") throw ContractError("loss.l2 must be 'squared' or 'root'");
        o.weights.l2 = l2 == "root" ? L2Mode::root : L2Mode::squared;
        o.enhance_loss = l.value("use_enhance", o.enhance_loss);
        o.reblur_loss = l.value("use_reblur", o.reblur_loss);
        o.weights.validate();
    }
    if (j.contains("adam")) {
        const auto& a = j.at("adam");
        o.adam.lr = a.value("lr", o.adam.lr);
        o.adam.beta1 = a.value("beta1", o.adam.beta1);
        o.adam.beta2 = a.value("beta2", o.adam.beta2);
        o.adam.eps = a.value("eps", o.adam.eps);
    }
    o.halve_every_epochs = j.value("halve_every_epochs", o.halve_every_epochs);
    o.steps = j.value("steps", o.steps);
    o.seed = j.value("seed", o.seed);
    if (o.steps < 0 || o.halve_every_epochs < 1) throw ContractError("steps must be >= 0 and halve_every_epochs >= 1");
}

double learning_rate(const TrainOptions& o, long step, std::size_t image_count)
{
    const auto per_epoch = std::max<long>(
        1, static_cast<long>((image_count + static_cast<std::size_t>(o.sampler.batch) - 1) / o.sampler.batch));
    const long epoch = step / per_epoch;
    return o.adam.lr * std::pow(0.5, static_cast<double>(epoch / o.halve_every_epochs));
}

BatchT<float> to_vars(const Batch& b)
{
    return {Var<float>::constant(b.x), Var<float>::constant(b.y), Var<float>::constant(b.y_lin), b.kernels};
}

Trainer::Trainer(TrainOptions o)
    : options(std::move(o)), store(init_network<float>(options.net, split_seed(options.seed, kInitStream))),
      adam(options.adam)
{
    options.sampler.validate();
    options.weights.validate();
}

LossParts Trainer::evaluate_loss(const Batch& batch)
{
    NoGradGuard guard;
    const auto b = to_vars(batch);
    const auto r = infwide_forward(b.y, std::span<const TensorF>(b.kernels), store, options.net);
    LossParts parts;
    objective(r, b, options.weights, options.enhance_loss, options.reblur_loss, &parts);
    return parts;
}

LossParts Trainer::train_step(const Batch& batch, double lr)
{
    const auto b = to_vars(batch);
    store.zero_grad();
    LossParts parts;
    {
        const auto r = infwide_forward(b.y, std::span<const TensorF>(b.kernels), store, options.net);
        const auto loss = objective(r, b, options.weights, options.enhance_loss, options.reblur_loss, &parts);
        if (!std::isfinite(parts.total)) throw ContractError("training loss is not finite at step " + std::to_string(step));
        backward(loss);
    }
    auto params = store.list();
    adam.step(params, lr);
    ++step;
    return parts;
}

Batch probe_batch(const std::vector<TensorD>& images, const TrainOptions& o)
{
    return stack(make_batch(images, o.sampler, split_seed(o.seed, kProbeStream)));
}

TrainResult Trainer::run(const std::vector<TensorD>& images, const std::function<void(const StepLog&)>& log)
{
    const auto start = std::chrono::steady_clock::now();
    TrainResult result;
    const Batch probe = probe_batch(images, options);
    result.initial = evaluate_loss(probe);
    const std::uint64_t batches = split_seed(options.seed, kBatchStream);
    const long end = step + options.steps;
    while (step < end) {
        const double lr = learning_rate(options, step, images.size());
        const Batch batch = stack(make_batch(images, options.sampler, split_seed(batches, static_cast<std::uint64_t>(step))));
        StepLog entry{step, lr, train_step(batch, lr)};
        result.batch_losses.push_back(entry.loss.total);
        if (log) log(entry);
    }
    result.final = evaluate_loss(probe);
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

TensorD wiener_baseline(const TensorD& y, const BlurKernel& k)
{
    const TensorD out = wiener_deconvolve(y, k.values, estimate_nsr(y).nsr);
    return TensorD(out.shape(), out.array().max(0.0).min(1.0));
}

EvalEntry evaluate_pair(const DegradedPair& pair, ParamStore<float>& store, const NetworkConfig& cfg,
                        const std::string& id)
{
    NoGradGuard guard;
    EvalEntry e;
    e.id = id;
    e.gain = pair.params.gain;
    const std::vector<TensorF> ks{pair.k.values.cast<float>()};
    const auto r = infwide_forward(Var<float>::constant(pair.y.cast<float>()), std::span<const TensorF>(ks), store, cfg);
    const TensorD out = clamp01(r.outputs.front().value()).cast<double>();
    e.psnr = capped_psnr(psnr(out, pair.x));
    e.ssim = ssim(out, pair.x);
    const TensorD base = wiener_baseline(pair.y, pair.k);
    e.wiener_psnr = capped_psnr(psnr(base, pair.x));
    e.wiener_ssim = ssim(base, pair.x);
    return e;
}

nlohmann::json eval_report(const std::vector<EvalEntry>& entries)
{
    if (entries.empty()) throw ContractError("eval_report: no entries");
    struct Acc {
        double psnr = 0, ssim = 0, wpsnr = 0, wssim = 0;
        int n = 0;
        void add(const EvalEntry& e)
        {
            psnr += e.psnr;
            ssim += e.ssim;
            wpsnr += e.wiener_psnr;
            wssim += e.wiener_ssim;
            ++n;
        }
        [[nodiscard]] nlohmann::json json() const
        {
            return {{"count", n},
                    {"psnr_mean", psnr / n},
                    {"ssim_mean", ssim / n},
                    {"wiener_psnr_mean", wpsnr / n},
                    {"wiener_ssim_mean", wssim / n}};
        }
    };
    Acc all;
    std::map<std::string, Acc> by_gain;
    nlohmann::json per_image = nlohmann::json::array();
    for (const auto& e : entries) {
        all.add(e);
        std::ostringstream key;
        key << e.gain;
        by_gain[key.str()].add(e);
        per_image.push_back({{"id", e.id},
                             {"gain", e.gain},
                             {"psnr", e.psnr},
                             {"ssim", e.ssim},
                             {"wiener_psnr", e.wiener_psnr},
                             {"wiener_ssim", e.wiener_ssim}});
    }
    nlohmann::json gain = nlohmann::json::object();
    for (const auto& [k, acc] : by_gain) gain[k] = acc.json();
    const auto summary = all.json();
    return {{"schema", 1},
            {"count", all.n},
            {"psnr_mean", summary["psnr_mean"]},
            {"ssim_mean", summary["ssim_mean"]},
            {"wiener_psnr_mean", summary["wiener_psnr_mean"]},
            {"wiener_ssim_mean", summary["wiener_ssim_mean"]},
            {"per_image", per_image},
            {"gain", gain}};
}

} // namespace infwide
