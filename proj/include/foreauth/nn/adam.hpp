#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "foreauth/common/error.hpp"
#include "foreauth/nn/tensor.hpp"

namespace foreauth::nn {

/// One parameter tensor registered with the optimizer, with a stable
/// human-readable name used in checkpoints and error messages.
template <typename S>
struct NamedParam {
    std::string name;
    TensorT<S> tensor;
};

template <typename S>
using ParamList = std::vector<NamedParam<S>>;

/// Adam with bias correction. Moment buffers parallel the parameter list.
template <typename S>
class AdamOptimizer {
  public:
    AdamOptimizer(ParamList<S> params, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                  double epsilon = 1e-8)
        : params_(std::move(params)), learning_rate_(learning_rate), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
        if (!(learning_rate_ > 0.0) || !std::isfinite(learning_rate_))
            throw ConfigError("AdamOptimizer: learning rate must be positive and finite");
        if (beta1_ < 0.0 || beta1_ >= 1.0 || beta2_ < 0.0 || beta2_ >= 1.0)
            throw ConfigError("AdamOptimizer: betas must lie in [0,1)");
        first_moment_.reserve(params_.size());
        second_moment_.reserve(params_.size());
        for (const auto& p : params_) {
            first_moment_.emplace_back(p.tensor.size(), 0.0);
            second_moment_.emplace_back(p.tensor.size(), 0.0);
        }
    }

    /// Applies one update from the gradients currently stored on the
    /// parameters. A non-finite gradient raises NumericError naming the
    /// offending parameter and the step at which it appeared.
    void step() {
        ++step_count_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
        for (std::size_t pi = 0; pi < params_.size(); ++pi) {
            auto& p = params_[pi];
            auto* node = p.tensor.node();
            auto& m = first_moment_[pi];
            auto& v = second_moment_[pi];
            for (std::size_t i = 0; i < node->values.size(); ++i) {
                const double g = static_cast<double>(node->grad[i]);
                if (!std::isfinite(g))
                    throw NumericError("non-finite gradient in parameter '" + p.name + "' at optimizer step " +
                                       std::to_string(step_count_));
                m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
                v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                node->values[i] = static_cast<S>(static_cast<double>(node->values[i]) - learning_rate_ * mhat / (std::sqrt(vhat) + epsilon_));
            }
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.tensor.zero_grad();
    }

    const ParamList<S>& params() const { return params_; }
    std::int64_t step_count() const { return step_count_; }
    double learning_rate() const { return learning_rate_; }
    void set_learning_rate(double lr) {
        if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("AdamOptimizer: learning rate must be positive and finite");
        learning_rate_ = lr;
    }

  private:
    ParamList<S> params_;
    double learning_rate_;
    double beta1_;
    double beta2_;
    double epsilon_;
    std::int64_t step_count_ = 0;
    // Moments are kept in double regardless of the working precision so long
    // runs do not accumulate float rounding in the optimizer state itself.
    std::vector<std::vector<double>> first_moment_;
    std::vector<std::vector<double>> second_moment_;
};

} // namespace foreauth::nn
