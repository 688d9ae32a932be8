#pragma once

#include "gapnet/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace gapnet::nn {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst;  // "<what>[index]" of the worst entry
    Index checked = 0;
};

inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Central-difference check of `count` entries starting at `values` against
/// `analytic`. `loss()` re-evaluates the scalar objective.
template <typename LossFn>
void check_entries(double* values, const double* analytic, Index count, LossFn&& loss,
                   const std::string& what, GradCheckResult& result, double eps = 1e-4) {
    for (Index i = 0; i < count; ++i) {
        const double saved = values[i];
        values[i] = saved + eps;
        const double up = loss();
        values[i] = saved - eps;
        const double down = loss();
        values[i] = saved;
        const double numeric = (up - down) / (2.0 * eps);
        const double err = relative_error(analytic[i], numeric);
        ++result.checked;
        if (err > result.max_rel_error || result.worst.empty()) {
            result.max_rel_error = err;
            result.worst = what + "[" + std::to_string(i) + "]";
        }
    }
}

/// Checks input and parameter gradients of one layer for the objective
/// sum(R .* layer(x)) with a random projection R.
inline GradCheckResult check_layer(Layer<double>& layer, Tensor<double> x, bool train,
                                   std::uint64_t seed = 7, double eps = 1e-4) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const Shape os = layer.output_shape(x.shape());
    Tensor<double> projection(os);
    for (Index i = 0; i < projection.size(); ++i) projection.flat()[i] = normal(rng);

    const auto loss = [&] { return layer.forward(x, train).flat().dot(projection.flat()); };

    layer.zero_grad();
    layer.forward(x, train);
    const Tensor<double> dx = layer.backward(projection);
    std::vector<Matrix<double>> grads;
    for (auto* p : layer.parameters()) grads.push_back(p->grad);

    GradCheckResult result;
    check_entries(x.data(), dx.data(), x.size(), loss, "input", result, eps);
    std::size_t k = 0;
    for (auto* p : layer.parameters()) {
        check_entries(p->value.data(), grads[k].data(), p->value.size(), loss, p->name, result, eps);
        ++k;
    }
    return result;
}

}  // namespace gapnet::nn
