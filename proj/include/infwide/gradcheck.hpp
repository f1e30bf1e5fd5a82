#pragma once

// Central finite-difference checks of reverse-mode gradients in double precision.

#include "infwide/autograd.hpp"

#include <functional>
#include <string>
#include <vector>

namespace infwide {

using GradFn = std::function<Var<double>(const std::vector<Var<double>>&)>;

/// Largest relative error, over the inputs, between the analytic directional
/// derivative <grad f, d> and (f(x + h d) - f(x - h d)) / 2h for a random direction
/// unit direction d drawn per input.
double check_gradient(const GradFn& f, const std::vector<TensorD>& inputs, std::uint64_t seed, double h = 1e-6,
                      std::vector<double>* per_input = nullptr);

struct GradCheckResult {
    std::string name;
    double error = 0.0;
    double tolerance = 0.0;
    bool passed = false;
    double seconds = 0.0;
    std::string detail;
};

struct GradCheckOptions {
    bool end_to_end = true;
    double op_tolerance = 1e-4;
    double network_tolerance = 1e-3;
    std::uint64_t seed = 7;
};

/// Every differentiable op and loss on three seeded shapes, then the whole network
/// with the training objective on a 16x16 batch.
std::vector<GradCheckResult> run_gradcheck_suite(const GradCheckOptions& opts = {},
                                                 const std::function<void(const GradCheckResult&)>& progress = {});

} // namespace infwide
