#pragma once

#include <cmath>
#include <string>

#include "foreauth/common/error.hpp"
#include "foreauth/nn/tensor.hpp"

namespace foreauth::nn {

/// Sinusoidal positional encoding matrix (length x d_model):
///   entry(t, 2i)   = sin(t / 10000^(2i / d_model))
///   entry(t, 2i+1) = cos(t / 10000^(2i / d_model))
/// d_model must be even so sin/cos pairs tile the row exactly.
template <typename S>
TensorT<S> positional_encoding(int length, int d_model) {
    if (length <= 0) throw ConfigError("positional_encoding: length must be positive, got " + std::to_string(length));
    if (d_model <= 0 || d_model % 2 != 0)
        throw ConfigError("positional_encoding: d_model must be positive and even, got " + std::to_string(d_model));
    std::vector<S> vals(static_cast<std::size_t>(length) * d_model);
    for (int t = 0; t < length; ++t)
        for (int i = 0; i < d_model / 2; ++i) {
            const double angle = t / std::pow(10000.0, (2.0 * i) / d_model);
            vals[static_cast<std::size_t>(t) * d_model + 2 * i] = static_cast<S>(std::sin(angle));
            vals[static_cast<std::size_t>(t) * d_model + 2 * i + 1] = static_cast<S>(std::cos(angle));
        }
    return TensorT<S>::from_values({length, d_model}, std::move(vals));
}

/// Scalar temporal encoding: position t within a span of length total,
/// mapped linearly onto [-0.5, +0.5].
inline double temporal_encoding(int t, int total) {
    if (total <= 0) throw ConfigError("temporal_encoding: span length must be positive, got " + std::to_string(total));
    if (t < 0 || t > total) throw ConfigError("temporal_encoding: position " + std::to_string(t) + " outside span [0," + std::to_string(total) + "]");
    return static_cast<double>(t) / static_cast<double>(total) - 0.5;
}

/// (length x d_model) matrix whose row r holds the constant temporal-encoding
/// value of span position offset+r, broadcast across the feature dimension.
template <typename S>
TensorT<S> temporal_encoding_matrix(int length, int offset, int total, int d_model) {
    if (length <= 0 || d_model <= 0) throw ConfigError("temporal_encoding_matrix: length and d_model must be positive");
    std::vector<S> vals(static_cast<std::size_t>(length) * d_model);
    for (int r = 0; r < length; ++r) {
        const S v = static_cast<S>(temporal_encoding(offset + r, total));
        for (int j = 0; j < d_model; ++j) vals[static_cast<std::size_t>(r) * d_model + j] = v;
    }
    return TensorT<S>::from_values({length, d_model}, std::move(vals));
}

} // namespace foreauth::nn
