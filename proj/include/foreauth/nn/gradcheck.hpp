#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "foreauth/nn/tensor.hpp"

namespace foreauth::nn {

/// Central-difference gradient check against the analytic backward pass.
///
/// `forward` must rebuild the graph from the current parameter values and
/// return a scalar loss. Returns the worst relative error
///   |analytic - numeric| / max(|analytic|, |numeric|, floor)
/// over every element of every parameter. Intended for double precision,
/// where healthy ops land well below 1e-6.
template <typename S>
double gradient_check(std::vector<TensorT<S>*> params, const std::function<TensorT<S>()>& forward, double step = 1e-5,
                      double floor = 1e-6) {
    auto loss = forward();
    if (loss.size() != 1) throw ShapeError("gradient_check: forward must return a scalar");
    for (auto* p : params) p->zero_grad();
    loss.backward();
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (auto* p : params) {
        std::vector<double> g(p->grad().begin(), p->grad().end());
        analytic.push_back(std::move(g));
    }

    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto* node = params[pi]->node();
        for (std::size_t i = 0; i < node->values.size(); ++i) {
            const S saved = node->values[i];
            node->values[i] = saved + static_cast<S>(step);
            const double up = static_cast<double>(forward().at(0));
            node->values[i] = saved - static_cast<S>(step);
            const double down = static_cast<double>(forward().at(0));
            node->values[i] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double a = analytic[pi][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), floor});
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
    }
    for (auto* p : params) p->zero_grad();
    return worst;
}

} // namespace foreauth::nn
