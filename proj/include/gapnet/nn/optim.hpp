#pragma once

#include "gapnet/nn/layers.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace gapnet::nn {

class OptimizerError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RangerOptions {
    double max_lr = 0.003;
    double beta1 = 0.95;
    double beta2 = 0.999;
    double eps = 1e-5;
    double weight_decay = 0.0;
    /// Adaptive steps start once the variance rectification term exceeds this.
    double rectify_threshold = 4.0;
    double lookahead_alpha = 0.5;
    Index lookahead_k = 6;
};

/// RAdam with decoupled weight decay, wrapped in lookahead.
template <typename Scalar>
class Ranger {
public:
    Ranger(std::vector<Param<Scalar>*> params, RangerOptions options)
        : params_(std::move(params)), opt_(options) {
        state_.reserve(params_.size());
        for (auto* p : params_) {
            state_.push_back({Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()),
                              Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()), p->value});
        }
    }

    const RangerOptions& options() const { return opt_; }
    RangerOptions& options() { return opt_; }
    Index steps() const { return step_; }

    /// Variance rectification term rho_t for 1-based step t.
    double rho(Index t) const {
        const double b2t = std::pow(opt_.beta2, static_cast<double>(t));
        const double rho_inf = 2.0 / (1.0 - opt_.beta2) - 1.0;
        return rho_inf - 2.0 * static_cast<double>(t) * b2t / (1.0 - b2t);
    }

    /// One update at learning rate `lr` using the gradients stored in the params.
    void step(double lr) {
        for (std::size_t i = 0; i < params_.size(); ++i) {
            if (!params_[i]->grad.allFinite()) {
                throw OptimizerError("non-finite gradient in parameter " + params_[i]->name);
            }
        }
        ++step_;
        const double t = static_cast<double>(step_);
        const double bc1 = 1.0 - std::pow(opt_.beta1, t);
        const double bc2 = 1.0 - std::pow(opt_.beta2, t);
        const double rho_t = rho(step_);
        const double rho_inf = 2.0 / (1.0 - opt_.beta2) - 1.0;
        const bool adaptive = rho_t > opt_.rectify_threshold;
        double step_size = 1.0 / bc1;
        if (adaptive) {
            const double r = std::sqrt((rho_t - 4.0) * (rho_t - 2.0) * rho_inf /
                                       ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t));
            step_size = r / bc1;
        }
        const auto b1 = static_cast<Scalar>(opt_.beta1);
        const auto b2 = static_cast<Scalar>(opt_.beta2);
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& p = *params_[i];
            auto& s = state_[i];
            s.m = b1 * s.m + (Scalar(1) - b1) * p.grad;
            s.v = b2 * s.v + (Scalar(1) - b2) * p.grad.cwiseProduct(p.grad);
            if (opt_.weight_decay != 0.0) {
                p.value *= static_cast<Scalar>(1.0 - lr * opt_.weight_decay);
            }
            if (adaptive) {
                const auto denom =
                    ((s.v.array() / static_cast<Scalar>(bc2)).sqrt() + static_cast<Scalar>(opt_.eps));
                p.value.array() -= static_cast<Scalar>(lr * step_size) * s.m.array() / denom;
            } else {
                p.value -= static_cast<Scalar>(lr * step_size) * s.m;
            }
        }
        if (opt_.lookahead_k > 0 && step_ % opt_.lookahead_k == 0) {
            const auto alpha = static_cast<Scalar>(opt_.lookahead_alpha);
            for (std::size_t i = 0; i < params_.size(); ++i) {
                auto& s = state_[i];
                s.slow += alpha * (params_[i]->value - s.slow);
                params_[i]->value = s.slow;
            }
        }
    }

    const Matrix<Scalar>& slow_weights(std::size_t i) const { return state_[i].slow; }

private:
    struct State {
        Matrix<Scalar> m;
        Matrix<Scalar> v;
        Matrix<Scalar> slow;
    };

    std::vector<Param<Scalar>*> params_;
    std::vector<State> state_;
    RangerOptions opt_;
    Index step_ = 0;
};

/// Flat-cosine policy: constant `max_lr` for the first `flat_fraction` of the
/// run, then cosine annealing to zero at `total_steps`.
inline double flat_cosine_lr(Index step, Index total_steps, double max_lr,
                             double flat_fraction = 0.72) {
    const double flat_end = flat_fraction * static_cast<double>(total_steps);
    const auto s = static_cast<double>(step);
    if (s < flat_end) return max_lr;
    const double span = static_cast<double>(total_steps) - flat_end;
    if (span <= 0.0) return 0.0;
    const double progress = std::min(1.0, (s - flat_end) / span);
    return max_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace gapnet::nn
