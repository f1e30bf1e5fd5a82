#pragma once

#include "infwide/adam.hpp"
#include "infwide/data.hpp"
#include "infwide/losses.hpp"
#include "infwide/network.hpp"

#include <functional>
#include <map>

namespace infwide {

struct TrainOptions {
    NetworkConfig net;
    SamplerConfig sampler = SamplerConfig::toy();
    LossWeights weights;
    bool enhance_loss = true;
    bool reblur_loss = true;
    AdamConfig adam;
    int halve_every_epochs = 50;
    int steps = 200;
    std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const TrainOptions& o);
/// Reads a training config: {"network": {...}, "sampler": {...}, "steps": ..., ...}.
/// Missing keys keep their defaults.
void from_json(const nlohmann::json& j, TrainOptions& o);

/// Learning rate after `step` updates; one epoch is one pass over the image list.
double learning_rate(const TrainOptions& o, long step, std::size_t image_count);

template <typename Scalar>
struct BatchT {
    Var<Scalar> x, y, y_lin;
    std::vector<Tensor<Scalar>> kernels;
};

/// Full objective for one forward pass. Parts disabled in the options are left out.
template <typename Scalar>
Var<Scalar> objective(const ForwardResult<Scalar>& r, const BatchT<Scalar>& b, const LossWeights& w, bool enhance,
                      bool reblur, LossParts* parts = nullptr)
{
    const std::span<const Tensor<Scalar>> ks(b.kernels);
    const auto d = deblur_loss<Scalar>(std::span<const Var<Scalar>>(r.outputs), b.x, w);
    Var<Scalar> e, rb;
    if (enhance && r.enhanced.defined()) e = enhance_loss(r.enhanced, b.y_lin, w);
    if (reblur) rb = reblur_loss(r.outputs.front(), b.y_lin, ks);
    auto total = total_loss(d, e, rb, w);
    if (parts) {
        parts->deblur = d.item();
        parts->enhance = e.defined() ? e.item() : 0.0;
        parts->reblur = rb.defined() ? rb.item() : 0.0;
        parts->total = total.item();
    }
    return total;
}

BatchT<float> to_vars(const Batch& b);

struct StepLog {
    long step = 0;
    double lr = 0.0;
    LossParts loss;
};

struct TrainResult {
    LossParts initial; // on the fixed probe batch, before the first update
    LossParts final;   // on the same batch after the last update
    std::vector<double> batch_losses;
    double seconds = 0.0;
};

/// Model, optimizer and step counter of a training run.
struct Trainer {
    TrainOptions options;
    ParamStore<float> store;
    Adam<float> adam;
    long step = 0;

    explicit Trainer(TrainOptions o);

    /// Loss of the current model on a batch without recording a graph.
    LossParts evaluate_loss(const Batch& batch);
    /// One Adam update on the batch; returns its loss before the update.
    LossParts train_step(const Batch& batch, double lr);
    /// Runs options.steps updates on batches drawn from `images`.
    TrainResult run(const std::vector<TensorD>& images, const std::function<void(const StepLog&)>& log = {});
};

/// The batch used to report training progress; disjoint seed stream from training batches.
Batch probe_batch(const std::vector<TensorD>& images, const TrainOptions& o);

struct EvalEntry {
    std::string id;
    double gain = 0.0;
    double psnr = 0.0, ssim = 0.0;               // network output
    double wiener_psnr = 0.0, wiener_ssim = 0.0; // image-space Wiener baseline
};

/// Restores one pair with the network and with the Wiener baseline; outputs are clamped to [0,1].
EvalEntry evaluate_pair(const DegradedPair& pair, ParamStore<float>& store, const NetworkConfig& cfg,
                        const std::string& id = "");

/// Wiener baseline estimate with the estimated global NSR.
TensorD wiener_baseline(const TensorD& y, const BlurKernel& k);

nlohmann::json eval_report(const std::vector<EvalEntry>& entries);

} // namespace infwide
