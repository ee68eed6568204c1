#pragma once

#include <string>

#include "foreauth/common/error.hpp"

namespace foreauth::nn {

/// Architecture hyperparameters shared by the transformer models.
struct ModelConfig {
    int d_model = 512;
    int n_head = 8;
    int d_q = 64;
    int d_k = 64;
    int d_v = 64;
    int d_hidden = 2048;
    int n_encoder_layers = 3;
    int n_decoder_layers = 1;
    double dropout_rate = 0.0;

    void validate() const {
        auto positive = [](int v, const char* name) {
            if (v <= 0) throw ConfigError(std::string("ModelConfig: ") + name + " must be positive, got " + std::to_string(v));
        };
        positive(d_model, "d_model");
        positive(n_head, "n_head");
        positive(d_q, "d_q");
        positive(d_k, "d_k");
        positive(d_v, "d_v");
        positive(d_hidden, "d_hidden");
        if (n_encoder_layers < 0 || n_decoder_layers < 0)
            throw ConfigError("ModelConfig: layer counts must be non-negative");
        if (d_model % 2 != 0)
            throw ConfigError("ModelConfig: d_model must be even for the sinusoidal encoding, got " + std::to_string(d_model));
        if (d_q != d_k)
            throw ConfigError("ModelConfig: d_q (" + std::to_string(d_q) + ") must equal d_k (" + std::to_string(d_k) +
                              ") for the scaled dot product");
        if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
            throw ConfigError("ModelConfig: dropout_rate must lie in [0,1), got " + std::to_string(dropout_rate));
    }
};

} // namespace foreauth::nn
