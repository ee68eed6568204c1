#pragma once

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "foreauth/common/error.hpp"
#include "foreauth/common/random.hpp"
#include "foreauth/data/session.hpp"
#include "foreauth/forecast/spec.hpp"
#include "foreauth/nn/adam.hpp"
#include "foreauth/nn/config.hpp"
#include "foreauth/nn/encoding.hpp"
#include "foreauth/nn/layers.hpp"
#include "foreauth/nn/tensor.hpp"
#include "foreauth/nn/transformer.hpp"

namespace foreauth::forecast {

/// Trigger probabilities emitted to consumers are clamped into the open unit
/// interval; float sigmoid saturates to exactly 1 for large activations.
inline constexpr float kTriggerClamp = 1e-6f;

/// Converts a (rows x 4) slice of session data into a float constant tensor.
inline nn::Tensor tensor_from(const data::TimeMatrix& m) {
    if (m.rows <= 0 || m.cols <= 0) throw ShapeError("tensor_from: empty matrix");
    std::vector<float> vals(m.values.size());
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = static_cast<float>(m.values[i]);
    return nn::Tensor::from_values({m.rows, m.cols}, std::move(vals));
}

/// Stacks equal-shaped windows into one (B x rows x cols) constant tensor.
inline nn::Tensor tensor_from_batch(const std::vector<const data::TimeMatrix*>& batch) {
    if (batch.empty()) throw ShapeError("tensor_from_batch: empty batch");
    const int rows = batch[0]->rows;
    const int cols = batch[0]->cols;
    std::vector<float> vals;
    vals.reserve(batch.size() * static_cast<std::size_t>(rows) * cols);
    for (const auto* m : batch) {
        if (m->rows != rows || m->cols != cols) throw ShapeError("tensor_from_batch: inconsistent window shapes");
        for (double v : m->values) vals.push_back(static_cast<float>(v));
    }
    return nn::Tensor::from_values({static_cast<int>(batch.size()), rows, cols}, std::move(vals));
}

/// Decoder input sequence: the last l_overlap rows of the window followed by
/// l_forecasting zero rows that the decoder fills in one shot.
inline data::TimeMatrix build_decoder_input(const data::TimeMatrix& window, const ForecastSpec& spec) {
    spec.validate();
    if (window.rows != spec.l_window)
        throw ConfigError("build_decoder_input: window has " + std::to_string(window.rows) + " rows, spec expects " +
                          std::to_string(spec.l_window));
    data::TimeMatrix out(spec.decoder_length(), window.cols);
    for (int r = 0; r < spec.l_overlap; ++r)
        for (int c = 0; c < window.cols; ++c) out.at(r, c) = window.at(spec.l_initial + r, c);
    return out; // remaining rows stay zero
}

/// Forecasted continuation: positions are unconstrained reals, trigger values
/// are probabilities strictly inside (0,1).
struct ForecastOutput {
    nn::Tensor positions; // (l_forecasting x 3) or (B x l_forecasting x 3)
    nn::Tensor trigger;   // (l_forecasting x 1) or (B x l_forecasting x 1)
};

/// Merges a single-window forecast into one (l_forecasting x 4) block laid
/// out like session data.
inline data::TimeMatrix forecast_block(const ForecastOutput& f) {
    if (f.positions.rank() != 2 || f.trigger.rank() != 2)
        throw ShapeError("forecast_block: expected single-window forecast tensors");
    const int rows = f.positions.dim(0);
    data::TimeMatrix out(rows, data::kChannels);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < 3; ++c) out.at(r, c) = static_cast<double>(f.positions.at(r, c));
        out.at(r, 3) = static_cast<double>(f.trigger.at(r, 0));
    }
    return out;
}

/// Transformer encoder-decoder that forecasts all l_forecasting future
/// timestamps in a single decoder pass (no autoregressive loop).
class ForecasterModel {
public:
    ForecasterModel(const nn::ModelConfig& config, const ForecastSpec& spec, std::uint64_t seed)
        : config_(config), spec_(spec) {
        config_.validate();
        spec_.validate();
        if (spec_.l_forecasting < 1)
            throw ConfigError("ForecasterModel: spec must have l_forecasting >= 1 (0 disables forecasting upstream)");
        if (config_.n_encoder_layers < 1 || config_.n_decoder_layers < 1)
            throw ConfigError("ForecasterModel: needs at least one encoder and one decoder layer");

        auto rng = make_rng(derive_seed(seed, {purpose_tag(SeedPurpose::model_init)}));
        embed_ = nn::Dense<float>(data::kChannels, config_.d_model, rng);
        for (int i = 0; i < config_.n_encoder_layers; ++i) encoder_.emplace_back(config_, rng);
        for (int i = 0; i < config_.n_decoder_layers; ++i) decoder_.emplace_back(config_, rng);
        pos_head_ = nn::Dense<float>(config_.d_model, data::kPositionChannels, rng);
        trig_head_ = nn::Dense<float>(config_.d_model, 1, rng);

        // Fixed sinusoidal + linear time encodings over the combined span.
        const int span = spec_.combined_length();
        enc_encoding_ = nn::add(nn::positional_encoding<float>(spec_.l_window, config_.d_model),
                                nn::temporal_encoding_matrix<float>(spec_.l_window, 0, span, config_.d_model));
        dec_encoding_ = nn::add(nn::positional_encoding<float>(spec_.decoder_length(), config_.d_model),
                                nn::temporal_encoding_matrix<float>(spec_.decoder_length(), spec_.l_initial, span, config_.d_model));
        self_mask_ = nn::AttentionMask::causal(spec_.decoder_length());
        cross_mask_ = nn::AttentionMask::aligned_causal(spec_.decoder_length(), spec_.l_window, spec_.l_initial);
    }

    /// Full differentiable pass over one window (l_window x 4) or a batch
    /// (B x l_window x 4). Exactly one encoder and one decoder invocation.
    ForecastOutput forward(const nn::Tensor& window, bool training = false, std::mt19937_64* rng = nullptr) {
        check_input(window);
        const int batch = window.rank() == 3 ? window.dim(0) : 0;

        auto x = nn::add(embed_.forward(window), tiled(enc_encoding_, batch));
        ++encoder_passes_;
        for (auto& layer : encoder_) x = layer.forward(x, nullptr, training, rng);

        auto dec = nn::add(embed_.forward(decoder_input(window)), tiled(dec_encoding_, batch));
        ++decoder_passes_;
        for (auto& layer : decoder_) dec = layer.forward(dec, x, &self_mask_, &cross_mask_, training, rng);

        auto out = nn::slice_time(dec, spec_.l_overlap, spec_.l_forecasting);
        return {pos_head_.forward(out), nn::sigmoid(trig_head_.forward(out))};
    }

    /// Inference on one raw window; outputs are detached constants with the
    /// trigger clamped strictly inside (0,1). Untrained use must be opted
    /// into explicitly.
    ForecastOutput forecast(const data::TimeMatrix& window, bool allow_untrained = false) {
        if (!trained_ && !allow_untrained)
            throw ConfigError("forecast: model is untrained; pass allow_untrained to override");
        auto out = forward(tensor_from(window), /*training=*/false, nullptr);
        return {detach_values(out.positions), clamp_trigger(out.trigger)};
    }

    /// Batched inference producing one (l_forecasting x 4) block per window.
    std::vector<data::TimeMatrix> forecast_blocks(const std::vector<const data::TimeMatrix*>& windows, int batch_size,
                                                  bool allow_untrained = false) {
        if (!trained_ && !allow_untrained)
            throw ConfigError("forecast: model is untrained; pass allow_untrained to override");
        if (batch_size < 1) throw ConfigError("forecast_blocks: batch size must be positive");
        std::vector<data::TimeMatrix> blocks;
        blocks.reserve(windows.size());
        for (std::size_t begin = 0; begin < windows.size(); begin += static_cast<std::size_t>(batch_size)) {
            const std::size_t end = std::min(windows.size(), begin + static_cast<std::size_t>(batch_size));
            std::vector<const data::TimeMatrix*> chunk(windows.begin() + static_cast<std::ptrdiff_t>(begin),
                                                       windows.begin() + static_cast<std::ptrdiff_t>(end));
            auto out = forward(tensor_from_batch(chunk), /*training=*/false, nullptr);
            const int lf = spec_.l_forecasting;
            for (std::size_t b = 0; b < chunk.size(); ++b) {
                data::TimeMatrix block(lf, data::kChannels);
                for (int r = 0; r < lf; ++r) {
                    for (int c = 0; c < 3; ++c)
                        block.at(r, c) = static_cast<double>(out.positions.at(static_cast<int>(b), r, c));
                    const float t = out.trigger.at(static_cast<int>(b), r, 0);
                    block.at(r, 3) = static_cast<double>(std::clamp(t, kTriggerClamp, 1.0f - kTriggerClamp));
                }
                blocks.push_back(std::move(block));
            }
        }
        return blocks;
    }

    nn::ParamList<float> parameters() {
        nn::ParamList<float> out;
        auto add = [&out](const std::string& name, nn::Tensor& t) { out.push_back({name, t}); };
        embed_.visit_params("embed", add);
        for (std::size_t i = 0; i < encoder_.size(); ++i) encoder_[i].visit_params("enc" + std::to_string(i), add);
        for (std::size_t i = 0; i < decoder_.size(); ++i) decoder_[i].visit_params("dec" + std::to_string(i), add);
        pos_head_.visit_params("pos_head", add);
        trig_head_.visit_params("trig_head", add);
        return out;
    }

    const nn::ModelConfig& config() const { return config_; }
    const ForecastSpec& spec() const { return spec_; }
    long encoder_passes() const { return encoder_passes_; }
    long decoder_passes() const { return decoder_passes_; }
    bool trained() const { return trained_; }
    void mark_trained() { trained_ = true; }

private:
    void check_input(const nn::Tensor& window) const {
        const int rank = window.rank();
        if (rank != 2 && rank != 3) throw ShapeError("forecast: window must be rank 2 or 3, got " + nn::shape_str(window.shape()));
        const int time = window.dim(rank - 2);
        const int feat = window.dim(rank - 1);
        if (time != spec_.l_window || feat != data::kChannels)
            throw ShapeError("forecast: window " + nn::shape_str(window.shape()) + " does not match spec (l_window=" +
                             std::to_string(spec_.l_window) + ", f=" + std::to_string(data::kChannels) + ")");
    }

    /// Expands an (L x d) encoding table across a batch dimension; batch = 0
    /// returns the table itself for rank-2 inputs.
    static nn::Tensor tiled(const nn::Tensor& enc, int batch) {
        if (batch == 0) return enc;
        const int rows = enc.dim(0);
        const int d = enc.dim(1);
        std::vector<float> vals;
        vals.reserve(static_cast<std::size_t>(batch) * enc.values().size());
        for (int b = 0; b < batch; ++b) vals.insert(vals.end(), enc.values().begin(), enc.values().end());
        return nn::Tensor::from_values({batch, rows, d}, std::move(vals));
    }

    /// Constant decoder input built from the window values (overlap rows
    /// copied, forecast rows zero). Gradients do not flow into raw inputs.
    nn::Tensor decoder_input(const nn::Tensor& window) const {
        const int batch = window.rank() == 3 ? window.dim(0) : 1;
        const int dec_len = spec_.decoder_length();
        const int f = data::kChannels;
        std::vector<float> vals(static_cast<std::size_t>(batch) * dec_len * f, 0.0f);
        for (int b = 0; b < batch; ++b)
            for (int r = 0; r < spec_.l_overlap; ++r)
                for (int c = 0; c < f; ++c)
                    vals[(static_cast<std::size_t>(b) * dec_len + r) * f + c] =
                        window.values()[(static_cast<std::size_t>(b) * spec_.l_window + spec_.l_initial + r) * f + c];
        nn::Shape shape = window.rank() == 3 ? nn::Shape{batch, dec_len, f} : nn::Shape{dec_len, f};
        return nn::Tensor::from_values(std::move(shape), std::move(vals));
    }

    static nn::Tensor detach_values(const nn::Tensor& t) { return nn::Tensor::from_values(t.shape(), t.values()); }

    static nn::Tensor clamp_trigger(const nn::Tensor& t) {
        std::vector<float> vals(t.values());
        for (auto& v : vals) v = std::clamp(v, kTriggerClamp, 1.0f - kTriggerClamp);
        return nn::Tensor::from_values(t.shape(), std::move(vals));
    }

    nn::ModelConfig config_;
    ForecastSpec spec_;
    nn::Dense<float> embed_;
    std::vector<nn::EncoderLayer<float>> encoder_;
    std::vector<nn::DecoderLayer<float>> decoder_;
    nn::Dense<float> pos_head_;
    nn::Dense<float> trig_head_;
    nn::Tensor enc_encoding_;
    nn::Tensor dec_encoding_;
    nn::AttentionMask self_mask_;
    nn::AttentionMask cross_mask_;
    long encoder_passes_ = 0;
    long decoder_passes_ = 0;
    bool trained_ = false;
};

} // namespace foreauth::forecast
