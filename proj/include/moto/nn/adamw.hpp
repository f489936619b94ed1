// AdamW with decoupled weight decay and a warmup+cosine learning-rate schedule.
#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "moto/nn/params.hpp"

namespace moto::nn {

struct AdamWConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
    int warmup_steps = 0;
    int total_steps = 0;  // 0 => constant lr after warmup
    double min_lr_frac = 0.0;
    double grad_clip = 1.0;  // global l2 norm; <=0 disables
};

class AdamW {
public:
    AdamW(ParamStore& store, AdamWConfig cfg) : store_(&store), cfg_(cfg) {
        for (Param* p : store.all()) {
            m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
            v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
        }
    }

    double lr_at(int step) const {  // step is 0-based
        double lr = cfg_.lr;
        if (cfg_.warmup_steps > 0 && step < cfg_.warmup_steps)
            return lr * double(step + 1) / double(cfg_.warmup_steps);
        if (cfg_.total_steps > cfg_.warmup_steps) {
            double t = double(step - cfg_.warmup_steps) /
                       double(cfg_.total_steps - cfg_.warmup_steps);
            t = std::min(1.0, std::max(0.0, t));
            double floor = cfg_.lr * cfg_.min_lr_frac;
            lr = floor + (cfg_.lr - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
        }
        return lr;
    }

    // Clips grads in place (global norm), applies one update, bumps the step.
    // Returns the pre-clip gradient norm.
    double step() {
        auto params = store_->all();
        double sq = 0.0;
        for (Param* p : params) sq += p->grad.squaredNorm();
        double gnorm = std::sqrt(sq);
        if (cfg_.grad_clip > 0.0 && gnorm > cfg_.grad_clip) {
            double scale = cfg_.grad_clip / gnorm;
            for (Param* p : params) p->grad *= scale;
        }
        double lr = lr_at(t_);
        ++t_;
        double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
        double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
        for (std::size_t i = 0; i < params.size(); ++i) {
            Param* p = params[i];
            require(!has_non_finite(p->grad), "non-finite gradient in " + p->name);
            m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * p->grad;
            v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * p->grad.cwiseProduct(p->grad);
            Mat mhat = m_[i] / bc1;
            Mat vhat = v_[i] / bc2;
            // decoupled decay on matrix params only (not biases / layernorm vectors)
            if (cfg_.weight_decay > 0.0 && p->value.rows() > 1 && p->value.cols() > 1)
                p->value -= lr * cfg_.weight_decay * p->value;
            p->value -= lr * (mhat.array() / (vhat.array().sqrt() + cfg_.eps)).matrix();
        }
        return gnorm;
    }

    int steps_taken() const { return t_; }

private:
    ParamStore* store_;
    AdamWConfig cfg_;
    std::vector<Mat> m_, v_;
    int t_ = 0;
};

}  // namespace moto::nn
