#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "foreauth/nn/layers.hpp"
#include "foreauth/nn/ops.hpp"
#include "foreauth/nn/tensor.hpp"

namespace foreauth::nn {

template <typename S>
struct AttentionResult {
    TensorT<S> output;  // (.., n_q, d_v)
    TensorT<S> weights; // (.., n_q, n_k) rows sum to 1, masked entries exactly 0
};

/// softmax(Q K^T / sqrt(d_k)) V with an optional boolean mask.
/// Q (.., n_q, d_k), K (.., n_k, d_k), V (.., n_k, d_v); rank 2 or 3 with a
/// shared leading batch dimension.
template <typename S>
AttentionResult<S> scaled_dot_product_attention_with_weights(const TensorT<S>& q, const TensorT<S>& k, const TensorT<S>& v,
                                                             const AttentionMask* mask = nullptr) {
    if (q.rank() != k.rank() || q.rank() != v.rank() || q.rank() < 2)
        throw ShapeError("attention: Q/K/V must share rank 2 or 3");
    const int d_k = q.dim(q.rank() - 1);
    if (k.dim(k.rank() - 1) != d_k)
        throw ShapeError("attention: query dim " + std::to_string(d_k) + " vs key dim " + std::to_string(k.dim(k.rank() - 1)));
    if (k.dim(k.rank() - 2) != v.dim(v.rank() - 2))
        throw ShapeError("attention: key count " + std::to_string(k.dim(k.rank() - 2)) + " vs value count " +
                         std::to_string(v.dim(v.rank() - 2)));
    if (q.rank() == 3 && (q.dim(0) != k.dim(0) || q.dim(0) != v.dim(0)))
        throw ShapeError("attention: batch dims differ");
    auto scores = scale(matmul(q, transpose_last2(k)), static_cast<S>(1.0 / std::sqrt(static_cast<double>(d_k))));
    auto weights = masked_softmax_lastdim(scores, mask);
    return {matmul(weights, v), weights};
}

template <typename S>
TensorT<S> scaled_dot_product_attention(const TensorT<S>& q, const TensorT<S>& k, const TensorT<S>& v,
                                        const AttentionMask* mask = nullptr) {
    return scaled_dot_product_attention_with_weights(q, k, v, mask).output;
}

/// Multi-head attention: per-head linear projections of Q/K/V, scaled
/// dot-product attention per head, head outputs concatenated and mixed by a
/// final output projection back to d_model.
template <typename S>
struct MultiHeadAttention {
    int d_model = 0;
    int n_head = 0;
    std::vector<Dense<S>> proj_q; // d_model -> d_q, one per head
    std::vector<Dense<S>> proj_k; // d_model -> d_k
    std::vector<Dense<S>> proj_v; // d_model -> d_v
    Dense<S> proj_out;            // n_head*d_v -> d_model

    MultiHeadAttention() = default;
    MultiHeadAttention(int d_model_, int n_head_, int d_q, int d_k, int d_v, std::mt19937_64& rng)
        : d_model(d_model_), n_head(n_head_) {
        if (d_q != d_k)
            throw ConfigError("MultiHeadAttention: d_q (" + std::to_string(d_q) + ") must equal d_k (" + std::to_string(d_k) + ")");
        if (d_model <= 0 || n_head <= 0 || d_q <= 0 || d_v <= 0)
            throw ConfigError("MultiHeadAttention: dimensions must be positive");
        proj_q.reserve(static_cast<std::size_t>(n_head));
        proj_k.reserve(static_cast<std::size_t>(n_head));
        proj_v.reserve(static_cast<std::size_t>(n_head));
        for (int h = 0; h < n_head; ++h) {
            proj_q.emplace_back(d_model, d_q, rng);
            proj_k.emplace_back(d_model, d_k, rng);
            proj_v.emplace_back(d_model, d_v, rng);
        }
        proj_out = Dense<S>(n_head * d_v, d_model, rng);
    }

    TensorT<S> forward(const TensorT<S>& query, const TensorT<S>& key, const TensorT<S>& value,
                       const AttentionMask* mask = nullptr) const {
        if (query.dim(query.rank() - 1) != d_model || key.dim(key.rank() - 1) != d_model ||
            value.dim(value.rank() - 1) != d_model)
            throw ShapeError("MultiHeadAttention: inputs must end in d_model=" + std::to_string(d_model));
        std::vector<TensorT<S>> heads;
        heads.reserve(static_cast<std::size_t>(n_head));
        for (int h = 0; h < n_head; ++h) {
            const auto hs = static_cast<std::size_t>(h);
            heads.push_back(scaled_dot_product_attention(proj_q[hs].forward(query), proj_k[hs].forward(key),
                                                         proj_v[hs].forward(value), mask));
        }
        return proj_out.forward(n_head == 1 ? heads[0] : concat_lastdim(heads));
    }

    template <typename F>
    void visit_params(const std::string& prefix, F&& f) {
        for (int h = 0; h < n_head; ++h) {
            const std::string hp = prefix + ".head" + std::to_string(h);
            proj_q[static_cast<std::size_t>(h)].visit_params(hp + ".q", f);
            proj_k[static_cast<std::size_t>(h)].visit_params(hp + ".k", f);
            proj_v[static_cast<std::size_t>(h)].visit_params(hp + ".v", f);
        }
        proj_out.visit_params(prefix + ".out", f);
    }
};

} // namespace foreauth::nn
