#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "foreauth/nn/ops.hpp"
#include "foreauth/nn/tensor.hpp"

namespace foreauth::nn {

/// Probabilities are clamped to [kBceEps, 1 - kBceEps] before the log.
inline constexpr double kBceEps = 1e-7;

/// Mean squared error over all elements; both operands may carry gradients.
template <typename S>
TensorT<S> mse_loss(const TensorT<S>& pred, const TensorT<S>& target) {
    if (pred.shape() != target.shape())
        throw ShapeError("mse_loss: shape mismatch " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
    const std::size_t n = pred.values().size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(pred.values()[i]) - static_cast<double>(target.values()[i]);
        acc += d * d;
    }
    return detail::make_result<S>({1}, {static_cast<S>(acc / static_cast<double>(n))}, {pred, target}, [n](TensorNode<S>& nd) {
        auto& pp = *nd.parents[0];
        auto& pt = *nd.parents[1];
        const S g = nd.grad[0] * S(2) / static_cast<S>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const S d = pp.values[i] - pt.values[i];
            if (pp.requires_grad) pp.grad[i] += g * d;
            if (pt.requires_grad) pt.grad[i] -= g * d;
        }
    });
}

namespace detail {

// Shared BCE kernel. strict_targets enforces the {0,1} domain; the soft
// variant accepts any target in [0,1]. Predictions are clamped into
// [kBceEps, 1-kBceEps] for the log; the gradient is evaluated at the clamped
// probability but still flows to the raw prediction, so saturated outputs
// keep a training signal instead of going dead.
template <typename S>
TensorT<S> bce_impl(const TensorT<S>& pred, const TensorT<S>& target, bool strict_targets, const char* name) {
    if (pred.shape() != target.shape())
        throw ShapeError(std::string(name) + ": shape mismatch " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
    const std::size_t n = pred.values().size();
    const double lo = kBceEps, hi = 1.0 - kBceEps;
    std::vector<S> clamped(n);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double y = static_cast<double>(target.values()[i]);
        if (strict_targets) {
            if (y != 0.0 && y != 1.0)
                throw DomainError(std::string(name) + ": target " + std::to_string(y) + " at index " + std::to_string(i) + " is not 0 or 1");
        } else if (y < 0.0 || y > 1.0) {
            throw DomainError(std::string(name) + ": target " + std::to_string(y) + " at index " + std::to_string(i) + " outside [0,1]");
        }
        const double p = std::clamp(static_cast<double>(pred.values()[i]), lo, hi);
        clamped[i] = static_cast<S>(p);
        acc -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    }
    return detail::make_result<S>({1}, {static_cast<S>(acc / static_cast<double>(n))}, {pred, target},
                                  [n, clamped = std::move(clamped)](TensorNode<S>& nd) {
                                      auto& pp = *nd.parents[0];
                                      auto& pt = *nd.parents[1];
                                      if (!pp.requires_grad) return;
                                      const double g = static_cast<double>(nd.grad[0]) / static_cast<double>(n);
                                      for (std::size_t i = 0; i < n; ++i) {
                                          const double p = static_cast<double>(clamped[i]);
                                          const double y = static_cast<double>(pt.values[i]);
                                          pp.grad[i] += static_cast<S>(g * (p - y) / (p * (1.0 - p)));
                                      }
                                  });
}

} // namespace detail

/// Mean binary cross-entropy; targets must be exactly 0 or 1.
template <typename S>
TensorT<S> bce_loss(const TensorT<S>& pred, const TensorT<S>& target) {
    return detail::bce_impl(pred, target, /*strict_targets=*/true, "bce_loss");
}

/// Mean binary cross-entropy against soft targets in [0,1]; used for the
/// trigger-pressure term, whose teacher values are continuous.
template <typename S>
TensorT<S> bce_loss_soft(const TensorT<S>& pred, const TensorT<S>& target) {
    return detail::bce_impl(pred, target, /*strict_targets=*/false, "bce_loss_soft");
}

/// Non-negative finite weights for the forecast and trigger loss terms.
struct LossWeights {
    double lambda_forecast = 1.0;
    double lambda_trigger = 1.0;

    void validate() const {
        if (!(lambda_forecast >= 0.0) || !std::isfinite(lambda_forecast))
            throw ConfigError("LossWeights: lambda_forecast must be a finite non-negative value");
        if (!(lambda_trigger >= 0.0) || !std::isfinite(lambda_trigger))
            throw ConfigError("LossWeights: lambda_trigger must be a finite non-negative value");
    }
};

/// Weighted sum  L = L_label + lambda_forecast * L_forecast + lambda_trigger * L_trigger.
/// A zero weight detaches that term: its gradient contribution is exactly zero.
template <typename S>
TensorT<S> composite_loss(const TensorT<S>& label_loss, const TensorT<S>& forecast_loss, const TensorT<S>& trigger_loss,
                          const LossWeights& w) {
    w.validate();
    TensorT<S> total = label_loss;
    if (w.lambda_forecast > 0.0) total = add(total, scale(forecast_loss, static_cast<S>(w.lambda_forecast)));
    if (w.lambda_trigger > 0.0) total = add(total, scale(trigger_loss, static_cast<S>(w.lambda_trigger)));
    return total;
}

} // namespace foreauth::nn
