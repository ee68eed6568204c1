#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "foreauth/common/error.hpp"
#include "foreauth/common/random.hpp"
#include "foreauth/data/session.hpp"
#include "foreauth/forecast/model.hpp"
#include "foreauth/nn/adam.hpp"
#include "foreauth/nn/config.hpp"
#include "foreauth/nn/conv.hpp"
#include "foreauth/nn/encoding.hpp"
#include "foreauth/nn/layers.hpp"
#include "foreauth/nn/tensor.hpp"
#include "foreauth/nn/transformer.hpp"

namespace foreauth::auth {

enum class ClassifierVariant { fcn, transformer };

inline const char* variant_name(ClassifierVariant v) {
    return v == ClassifierVariant::fcn ? "fcn" : "transformer";
}

inline ClassifierVariant parse_variant(const std::string& name) {
    if (name == "fcn") return ClassifierVariant::fcn;
    if (name == "transformer" || name == "tf") return ClassifierVariant::transformer;
    throw ConfigError("unknown classifier variant '" + name + "' (expected fcn or transformer)");
}

/// Encoder stack defaults for the transformer classifier: two layers, the
/// standard widths, and no decoder.
inline nn::ModelConfig transformer_classifier_defaults() {
    nn::ModelConfig c;
    c.d_model = 512;
    c.n_head = 8;
    c.d_q = c.d_k = c.d_v = 64;
    c.d_hidden = 2048;
    c.n_encoder_layers = 2;
    c.n_decoder_layers = 0;
    return c;
}

/// Hyperparameters of one binary classifier. `input_length` is the number of
/// rows a scoring input must have: the window size alone, or window size plus
/// forecast horizon when classifying concatenated sequences.
struct ClassifierConfig {
    ClassifierVariant variant = ClassifierVariant::fcn;
    std::vector<int> filters{128, 256, 128};
    std::vector<int> kernels{8, 5, 3};
    nn::ModelConfig tf = transformer_classifier_defaults();
    int input_length = 45;
    double learning_rate = 0.0; // 0 selects the variant default

    /// Adam step size: explicit value if set, else 1e-3 (fcn) / 1e-4 (transformer).
    double effective_learning_rate() const {
        if (learning_rate > 0.0) return learning_rate;
        return variant == ClassifierVariant::fcn ? 1e-3 : 1e-4;
    }

    void validate() const {
        if (input_length < 1)
            throw ConfigError("ClassifierConfig: input_length must be >= 1, got " + std::to_string(input_length));
        if (learning_rate < 0.0)
            throw ConfigError("ClassifierConfig: learning_rate must be non-negative");
        if (variant == ClassifierVariant::fcn) {
            if (filters.empty() || filters.size() != kernels.size())
                throw ConfigError("ClassifierConfig: filters and kernels must be non-empty lists of equal length");
            for (int f : filters)
                if (f < 1) throw ConfigError("ClassifierConfig: filter counts must be positive");
            for (int k : kernels)
                if (k < 1) throw ConfigError("ClassifierConfig: kernel sizes must be positive");
        } else {
            tf.validate();
            if (tf.n_encoder_layers < 1)
                throw ConfigError("ClassifierConfig: transformer variant needs at least one encoder layer");
        }
    }
};

/// Genuine-class probability of one scored window.
struct AuthScore {
    double genuine_probability = 0.0;
};

/// Accept iff the genuine probability reaches the operating threshold.
inline bool authenticate(const AuthScore& score, double threshold) {
    if (!(threshold >= 0.0 && threshold <= 1.0))
        throw ConfigError("authenticate: threshold must lie in [0,1], got " + std::to_string(threshold));
    return score.genuine_probability >= threshold;
}

/// Appends a forecast block to a window along the time axis. An empty
/// forecast is the identity, so a zero horizon degrades gracefully.
inline data::TimeMatrix concat_forecast(const data::TimeMatrix& window, const data::TimeMatrix& forecast) {
    if (forecast.empty()) return window;
    if (forecast.cols != window.cols)
        throw ShapeError("concat_forecast: forecast has " + std::to_string(forecast.cols) + " columns, window has " +
                         std::to_string(window.cols));
    data::TimeMatrix out(window.rows + forecast.rows, window.cols);
    std::copy(window.values.begin(), window.values.end(), out.values.begin());
    std::copy(forecast.values.begin(), forecast.values.end(),
              out.values.begin() + static_cast<std::ptrdiff_t>(window.values.size()));
    return out;
}

inline data::TimeMatrix concat_forecast(const data::TimeMatrix& window, const forecast::ForecastOutput& f) {
    return concat_forecast(window, forecast::forecast_block(f));
}

/// Everything needed to roll a model back to its best validation epoch:
/// parameter values plus the batch-norm running statistics.
struct ModelSnapshot {
    std::vector<std::vector<float>> params;
    std::vector<std::vector<float>> buffers;
};

/// One user's binary authenticator. Both variants map a (rows x 4) sequence
/// to two-class probabilities; column 1 is the genuine class.
class AuthModel {
public:
    AuthModel(std::string user_id, const ClassifierConfig& config, std::uint64_t seed)
        : user_id_(std::move(user_id)), config_(config), seed_(seed) {
        config_.validate();
        auto rng = make_rng(derive_seed(seed, {purpose_tag(SeedPurpose::model_init), fnv1a64(user_id_)}));
        if (config_.variant == ClassifierVariant::fcn) {
            int channels = data::kChannels;
            for (std::size_t i = 0; i < config_.filters.size(); ++i) {
                conv_.emplace_back(channels, config_.filters[i], config_.kernels[i], rng);
                channels = config_.filters[i];
            }
            head_ = nn::Dense<float>(channels, 2, rng);
        } else {
            embed_ = nn::Dense<float>(data::kChannels, config_.tf.d_model, rng);
            for (int i = 0; i < config_.tf.n_encoder_layers; ++i) encoder_.emplace_back(config_.tf, rng);
            head_ = nn::Dense<float>(config_.tf.d_model, 2, rng);
            // Position information only; no temporal encoding in the classifier.
            encoding_ = nn::positional_encoding<float>(config_.input_length, config_.tf.d_model);
        }
        // Shrink the output head so an untrained model scores close to a coin
        // flip regardless of width; Adam's per-parameter step normalization
        // erases the smaller start within a few updates.
        for (auto* t : {&head_.weight, &head_.bias})
            for (auto& v : t->node()->values) v *= 0.1f;
    }

    /// Differentiable pass over (rows x 4) or (B x rows x 4); returns
    /// two-class probabilities shaped (2) or (B x 2).
    nn::Tensor forward(const nn::Tensor& input, bool training = false, std::mt19937_64* rng = nullptr) {
        check_input(input);
        const bool single = input.rank() == 2;
        auto x = single ? nn::reshape(input, {1, input.dim(0), input.dim(1)}) : input;
        nn::Tensor pooled;
        if (config_.variant == ClassifierVariant::fcn) {
            for (auto& block : conv_) x = block.forward(x, training);
            pooled = nn::global_average_pool(x);
        } else {
            x = nn::add(embed_.forward(x), tiled(encoding_, x.dim(0)));
            for (auto& layer : encoder_) x = layer.forward(x, nullptr, training, rng);
            pooled = nn::global_average_pool(x); // mean over sequence positions
        }
        auto probs = nn::softmax_lastdim(head_.forward(pooled));
        return single ? nn::reshape(probs, {2}) : probs;
    }

    /// Inference on one raw window or concatenated sequence.
    AuthScore classify_window(const data::TimeMatrix& input) {
        auto probs = forward(forecast::tensor_from(input), /*training=*/false, nullptr);
        return {static_cast<double>(probs.at(1))};
    }

    /// Batched inference; one genuine probability per input, in order.
    std::vector<double> score_windows(const std::vector<const data::TimeMatrix*>& inputs, int batch_size) {
        if (batch_size < 1) throw ConfigError("score_windows: batch size must be positive");
        std::vector<double> out;
        out.reserve(inputs.size());
        for (std::size_t begin = 0; begin < inputs.size(); begin += static_cast<std::size_t>(batch_size)) {
            const std::size_t end = std::min(inputs.size(), begin + static_cast<std::size_t>(batch_size));
            std::vector<const data::TimeMatrix*> chunk(inputs.begin() + static_cast<std::ptrdiff_t>(begin),
                                                       inputs.begin() + static_cast<std::ptrdiff_t>(end));
            auto probs = forward(forecast::tensor_from_batch(chunk), /*training=*/false, nullptr);
            for (int b = 0; b < static_cast<int>(chunk.size()); ++b) out.push_back(static_cast<double>(probs.at(b, 1)));
        }
        return out;
    }

    nn::ParamList<float> parameters() {
        nn::ParamList<float> out;
        auto add = [&out](const std::string& name, nn::Tensor& t) { out.push_back({name, t}); };
        if (config_.variant == ClassifierVariant::fcn) {
            for (std::size_t i = 0; i < conv_.size(); ++i) conv_[i].visit_params("conv" + std::to_string(i), add);
        } else {
            embed_.visit_params("embed", add);
            for (std::size_t i = 0; i < encoder_.size(); ++i) encoder_[i].visit_params("enc" + std::to_string(i), add);
        }
        head_.visit_params("head", add);
        return out;
    }

    ModelSnapshot snapshot() {
        ModelSnapshot s;
        for (auto& p : parameters()) s.params.push_back(p.tensor.values());
        for (auto& block : conv_) {
            s.buffers.push_back(block.bn_state.running_mean);
            s.buffers.push_back(block.bn_state.running_var);
        }
        return s;
    }

    void restore(const ModelSnapshot& s) {
        auto params = parameters();
        if (s.params.size() != params.size() || s.buffers.size() != 2 * conv_.size())
            throw ConfigError("AuthModel::restore: snapshot does not match this model");
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto* node = params[i].tensor.node();
            if (s.params[i].size() != node->values.size())
                throw ConfigError("AuthModel::restore: parameter '" + params[i].name + "' size mismatch");
            node->values = s.params[i];
        }
        for (std::size_t i = 0; i < conv_.size(); ++i) {
            conv_[i].bn_state.running_mean = s.buffers[2 * i];
            conv_[i].bn_state.running_var = s.buffers[2 * i + 1];
        }
    }

    const std::string& user_id() const { return user_id_; }
    const ClassifierConfig& config() const { return config_; }
    std::uint64_t seed() const { return seed_; }

private:
    void check_input(const nn::Tensor& input) const {
        const int rank = input.rank();
        if (rank != 2 && rank != 3)
            throw ShapeError("classify: input must be rank 2 or 3, got " + nn::shape_str(input.shape()));
        const int rows = input.dim(rank - 2);
        const int feat = input.dim(rank - 1);
        if (rows != config_.input_length || feat != data::kChannels)
            throw ShapeError("classify: input " + nn::shape_str(input.shape()) + " does not match the configured length (" +
                             std::to_string(config_.input_length) + " x " + std::to_string(data::kChannels) + ")");
    }

    /// Expands the (L x d) encoding table across the batch dimension.
    static nn::Tensor tiled(const nn::Tensor& enc, int batch) {
        std::vector<float> vals;
        vals.reserve(static_cast<std::size_t>(batch) * enc.values().size());
        for (int b = 0; b < batch; ++b) vals.insert(vals.end(), enc.values().begin(), enc.values().end());
        return nn::Tensor::from_values({batch, enc.dim(0), enc.dim(1)}, std::move(vals));
    }

    std::string user_id_;
    ClassifierConfig config_;
    std::uint64_t seed_ = 0;
    std::vector<nn::Conv1dBlock<float>> conv_;
    nn::Dense<float> embed_;
    std::vector<nn::EncoderLayer<float>> encoder_;
    nn::Dense<float> head_;
    nn::Tensor encoding_;
};

inline AuthScore classify_window(AuthModel& model, const data::TimeMatrix& input) {
    return model.classify_window(input);
}

} // namespace foreauth::auth
