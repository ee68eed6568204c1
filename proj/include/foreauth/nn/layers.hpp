#pragma once

#include <cmath>
#include <random>
#include <string>

#include "foreauth/nn/ops.hpp"
#include "foreauth/nn/tensor.hpp"

namespace foreauth::nn {

/// Fills a trainable tensor with U(-1/sqrt(fan_in), +1/sqrt(fan_in)) samples.
template <typename S>
TensorT<S> uniform_init(const Shape& shape, int fan_in, std::mt19937_64& rng) {
    if (fan_in <= 0) throw ConfigError("uniform_init: fan_in must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<S> vals(static_cast<std::size_t>(shape_size(shape)));
    for (auto& v : vals) v = static_cast<S>(dist(rng));
    return TensorT<S>::from_values(shape, std::move(vals), /*requires_grad=*/true);
}

/// Affine map y = x W + b applied position-wise to the last dimension.
template <typename S>
struct Dense {
    TensorT<S> weight; // (in, out)
    TensorT<S> bias;   // (out)

    Dense() = default;
    Dense(int in, int out, std::mt19937_64& rng)
        : weight(uniform_init<S>({in, out}, in, rng)), bias(uniform_init<S>({out}, in, rng)) {}

    TensorT<S> forward(const TensorT<S>& x) const { return add_bias(matmul(x, weight), bias); }

    int in_features() const { return weight.dim(0); }
    int out_features() const { return weight.dim(1); }

    template <typename F>
    void visit_params(const std::string& prefix, F&& f) {
        f(prefix + ".weight", weight);
        f(prefix + ".bias", bias);
    }
};

/// Learnable layer normalization over the last dimension.
template <typename S>
struct LayerNorm {
    TensorT<S> gamma;
    TensorT<S> beta;
    double eps = 1e-9;

    LayerNorm() = default;
    explicit LayerNorm(int d)
        : gamma(TensorT<S>::full({d}, S(1))), beta(TensorT<S>::full({d}, S(0))) {
        gamma.set_requires_grad(true);
        beta.set_requires_grad(true);
    }

    TensorT<S> forward(const TensorT<S>& x) const { return layer_norm(x, gamma, beta, eps); }

    template <typename F>
    void visit_params(const std::string& prefix, F&& f) {
        f(prefix + ".gamma", gamma);
        f(prefix + ".beta", beta);
    }
};

/// Two-layer position-wise feed-forward block with ReLU:
///   d_model -> d_hidden -> d_model
template <typename S>
struct FeedForward {
    Dense<S> fc1;
    Dense<S> fc2;

    FeedForward() = default;
    FeedForward(int d_model, int d_hidden, std::mt19937_64& rng) : fc1(d_model, d_hidden, rng), fc2(d_hidden, d_model, rng) {}

    TensorT<S> forward(const TensorT<S>& x) const { return fc2.forward(relu(fc1.forward(x))); }

    template <typename F>
    void visit_params(const std::string& prefix, F&& f) {
        fc1.visit_params(prefix + ".fc1", f);
        fc2.visit_params(prefix + ".fc2", f);
    }
};

} // namespace foreauth::nn
