#pragma once

#include <cmath>
#include <random>
#include <string>

#include "foreauth/nn/layers.hpp"
#include "foreauth/nn/ops.hpp"

namespace foreauth::nn {

/// Conv1d (same padding) -> batch norm -> ReLU, the building block of the
/// fully convolutional classifier.
template <typename S>
struct Conv1dBlock {
    TensorT<S> kernel; // (K, Cin, F)
    TensorT<S> bias;   // (F)
    TensorT<S> gamma;  // (F)
    TensorT<S> beta;   // (F)
    BatchNormState<S> bn_state;

    Conv1dBlock() = default;
    Conv1dBlock(int in_channels, int filters, int kernel_size, std::mt19937_64& rng)
        : kernel(uniform_init<S>({kernel_size, in_channels, filters}, kernel_size * in_channels, rng)),
          bias(uniform_init<S>({filters}, kernel_size * in_channels, rng)),
          gamma(TensorT<S>::full({filters}, S(1))),
          beta(TensorT<S>::full({filters}, S(0))),
          bn_state(filters) {
        if (kernel_size <= 0) throw ConfigError("Conv1dBlock: kernel size must be positive");
        if (in_channels <= 0 || filters <= 0) throw ConfigError("Conv1dBlock: channel counts must be positive");
        gamma.set_requires_grad(true);
        beta.set_requires_grad(true);
    }

    TensorT<S> forward(const TensorT<S>& x, bool training) {
        return relu(batch_norm(conv1d_same(x, kernel, bias), gamma, beta, bn_state, training));
    }

    template <typename F>
    void visit_params(const std::string& prefix, F&& f) {
        f(prefix + ".kernel", kernel);
        f(prefix + ".bias", bias);
        f(prefix + ".gamma", gamma);
        f(prefix + ".beta", beta);
    }
};

} // namespace foreauth::nn
