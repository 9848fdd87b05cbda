#pragma once

#include <string>
#include <vector>

#include "orbevo/autodiff.hpp"

namespace orbevo::ad {

struct Parameter {
    Tensor tensor;
    std::string name;
    bool trainable = true;
    Mat m;  // first moment
    Mat v;  // second moment
};

/// Flat registry of named parameters; models register into one of these.
class ParameterSet {
public:
    Tensor add(const std::string& name, Mat init, bool trainable = true) {
        for (const auto& p : params_)
            require(p.name != name, "ParameterSet: duplicate parameter " + name);
        Parameter p;
        p.tensor = trainable ? Tensor::param(std::move(init))
                             : Tensor::constant(std::move(init));
        p.name = name;
        p.trainable = trainable;
        p.m = Mat::Zero(p.tensor.rows(), p.tensor.cols());
        p.v = Mat::Zero(p.tensor.rows(), p.tensor.cols());
        params_.push_back(std::move(p));
        return params_.back().tensor;
    }

    std::vector<Parameter>& params() { return params_; }
    const std::vector<Parameter>& params() const { return params_; }

    Parameter& find(const std::string& name) {
        for (auto& p : params_)
            if (p.name == name) return p;
        throw OrbevoError("ParameterSet: no parameter " + name);
    }

    std::size_t count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += static_cast<std::size_t>(p.tensor.val().size());
        return n;
    }

    void zero_grad() {
        for (auto& p : params_)
            if (p.trainable) p.tensor.grad().setZero();
    }

private:
    std::vector<Parameter> params_;
};

/// Cosine annealing from lr_max to lr_min over total_steps, with an optional
/// linear warmup prefix.
struct CosineSchedule {
    double lr_max = 1e-3;
    double lr_min = 1e-6;
    int warmup_steps = 0;
    int total_steps = 1;

    double lr(int step) const {
        if (warmup_steps > 0 && step < warmup_steps)
            return lr_max * (step + 1) / static_cast<double>(warmup_steps);
        const double u =
            std::min(1.0, (step - warmup_steps) /
                              std::max(1.0, static_cast<double>(total_steps - warmup_steps)));
        return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(M_PI * u));
    }
};

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-3;
};

/// Decoupled-weight-decay Adam with bias correction.
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

    void step(ParameterSet& params, double lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
        const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
        for (auto& p : params.params()) {
            if (!p.trainable) continue;
            const Mat& g = p.tensor.grad();
            p.m = cfg_.beta1 * p.m + (1.0 - cfg_.beta1) * g;
            p.v = cfg_.beta2 * p.v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
            const Mat mhat = p.m / bc1;
            const Mat vhat = p.v / bc2;
            p.tensor.val() -=
                lr * (mhat.array() / (vhat.array().sqrt() + cfg_.eps)).matrix();
            p.tensor.val() *= 1.0 - lr * cfg_.weight_decay;
        }
    }

    int steps_taken() const { return t_; }

private:
    AdamWConfig cfg_;
    int t_ = 0;
};

}  // namespace orbevo::ad
