#pragma once

#include "infwide/autograd.hpp"

#include <cmath>
#include <vector>

namespace infwide {

struct AdamConfig {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First and second moment estimates for one parameter tensor.
template <typename Scalar>
struct AdamMoments {
    Tensor<Scalar> m, v;
};

/// Bias-corrected Adam. Parameters are updated in place; the step counter is shared.
template <typename Scalar>
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    /// One update of `params` from their accumulated grads. A parameter without a grad
    /// is treated as having a zero gradient.
    void step(std::vector<Var<Scalar>>& params, double lr)
    {
        if (moments_.empty()) {
            moments_.reserve(params.size());
            for (auto& p : params) moments_.push_back({Tensor<Scalar>(p.shape()), Tensor<Scalar>(p.shape())});
        }
        if (moments_.size() != params.size()) throw ContractError("Adam: parameter list changed between steps");
        ++t_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        const auto b1 = static_cast<Scalar>(cfg_.beta1), b2 = static_cast<Scalar>(cfg_.beta2);
        const auto step_size = static_cast<Scalar>(lr / c1);
        const auto sqrt_c2 = static_cast<Scalar>(std::sqrt(c2));
        const auto eps = static_cast<Scalar>(cfg_.eps);
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& p = params[i];
            auto& [m, v] = moments_[i];
            if (m.shape() != p.shape())
                throw ContractError("Adam: state shape " + m.shape().str() + " vs parameter " + p.shape().str());
            if (!p.has_grad()) {
                m.array() *= b1;
                v.array() *= b2;
            } else {
                const auto& g = p.grad().array();
                m.array() = b1 * m.array() + (Scalar(1) - b1) * g;
                v.array() = b2 * v.array() + (Scalar(1) - b2) * g.square();
            }
            p.mutable_value().array() -= step_size * m.array() / (v.array().sqrt() / sqrt_c2 + eps);
        }
    }

    [[nodiscard]] long steps() const { return t_; }
    [[nodiscard]] const std::vector<AdamMoments<Scalar>>& moments() const { return moments_; }
    [[nodiscard]] const AdamConfig& config() const { return cfg_; }

    void restore(long t, std::vector<AdamMoments<Scalar>> moments)
    {
        t_ = t;
        moments_ = std::move(moments);
    }

private:
    AdamConfig cfg_;
    long t_ = 0;
    std::vector<AdamMoments<Scalar>> moments_;
};

} // namespace infwide
