#pragma once

#include <random>
#include <string>

#include "foreauth/nn/attention.hpp"
#include "foreauth/nn/config.hpp"
#include "foreauth/nn/layers.hpp"
#include "foreauth/nn/ops.hpp"

namespace foreauth::nn {

/// Transformer encoder layer, post-norm residual arrangement:
///   x = LN(x + Dropout(SelfAttn(x)));  x = LN(x + Dropout(FF(x)))
template <typename S>
struct EncoderLayer {
    MultiHeadAttention<S> self_attn;
    LayerNorm<S> norm1;
    FeedForward<S> ff;
    LayerNorm<S> norm2;
    double dropout_rate = 0.0;

    EncoderLayer() = default;
    EncoderLayer(const ModelConfig& c, std::mt19937_64& rng)
        : self_attn(c.d_model, c.n_head, c.d_q, c.d_k, c.d_v, rng),
          norm1(c.d_model),
          ff(c.d_model, c.d_hidden, rng),
          norm2(c.d_model),
          dropout_rate(c.dropout_rate) {}

    TensorT<S> forward(const TensorT<S>& x, const AttentionMask* mask, bool training, std::mt19937_64* rng) const {
        auto a = dropout(self_attn.forward(x, x, x, mask), dropout_rate, rng, training);
        auto h = norm1.forward(add(x, a));
        auto f = dropout(ff.forward(h), dropout_rate, rng, training);
        return norm2.forward(add(h, f));
    }

    template <typename F>
    void visit_params(const std::string& prefix, F&& f) {
        self_attn.visit_params(prefix + ".attn", f);
        norm1.visit_params(prefix + ".norm1", f);
        ff.visit_params(prefix + ".ff", f);
        norm2.visit_params(prefix + ".norm2", f);
    }
};

/// Transformer decoder layer: masked self-attention over the decoder stream,
/// cross-attention against the encoder memory, then the feed-forward block,
/// each wrapped in a post-norm residual.
template <typename S>
struct DecoderLayer {
    MultiHeadAttention<S> self_attn;
    LayerNorm<S> norm1;
    MultiHeadAttention<S> cross_attn;
    LayerNorm<S> norm2;
    FeedForward<S> ff;
    LayerNorm<S> norm3;
    double dropout_rate = 0.0;

    DecoderLayer() = default;
    DecoderLayer(const ModelConfig& c, std::mt19937_64& rng)
        : self_attn(c.d_model, c.n_head, c.d_q, c.d_k, c.d_v, rng),
          norm1(c.d_model),
          cross_attn(c.d_model, c.n_head, c.d_q, c.d_k, c.d_v, rng),
          norm2(c.d_model),
          ff(c.d_model, c.d_hidden, rng),
          norm3(c.d_model),
          dropout_rate(c.dropout_rate) {}

    TensorT<S> forward(const TensorT<S>& x, const TensorT<S>& memory, const AttentionMask* self_mask,
                       const AttentionMask* cross_mask, bool training, std::mt19937_64* rng) const {
        auto a = dropout(self_attn.forward(x, x, x, self_mask), dropout_rate, rng, training);
        auto h = norm1.forward(add(x, a));
        auto c = dropout(cross_attn.forward(h, memory, memory, cross_mask), dropout_rate, rng, training);
        auto h2 = norm2.forward(add(h, c));
        auto f = dropout(ff.forward(h2), dropout_rate, rng, training);
        return norm3.forward(add(h2, f));
    }

    template <typename F>
    void visit_params(const std::string& prefix, F&& f) {
        self_attn.visit_params(prefix + ".self_attn", f);
        norm1.visit_params(prefix + ".norm1", f);
        cross_attn.visit_params(prefix + ".cross_attn", f);
        norm2.visit_params(prefix + ".norm2", f);
        ff.visit_params(prefix + ".ff", f);
        norm3.visit_params(prefix + ".norm3", f);
    }
};

} // namespace foreauth::nn
