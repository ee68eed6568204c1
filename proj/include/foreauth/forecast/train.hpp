#pragma once

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "foreauth/common/error.hpp"
#include "foreauth/common/random.hpp"
#include "foreauth/data/session.hpp"
#include "foreauth/forecast/model.hpp"
#include "foreauth/nn/adam.hpp"
#include "foreauth/nn/losses.hpp"

namespace foreauth::forecast {

struct ForecastTrainOptions {
    int epochs = 200;
    double learning_rate = 1e-4;
    int batch_size = 32;
    std::uint64_t seed = 0;
    nn::LossWeights weights;
    /// When positive, training stops early once the epoch's training-set
    /// position MSE drops below this value (memorization/overfit runs).
    double stop_position_mse = 0.0;

    void validate() const {
        if (epochs < 1) throw ConfigError("train_forecaster: epochs must be positive");
        if (batch_size < 1) throw ConfigError("train_forecaster: batch size must be positive");
        weights.validate();
        if (weights.lambda_forecast == 0.0 && weights.lambda_trigger == 0.0)
            throw ConfigError("train_forecaster: at least one of lambda_forecast/lambda_trigger must be positive");
    }
};

struct ForecastTrainResult {
    std::vector<double> loss_trace; // mean training loss per epoch
    int used_windows = 0;
    int excluded_windows = 0; // genuine windows lacking l_forecasting rows of tail room
    int steps = 0;
};

namespace detail {

/// Genuine windows with at least l_forecasting rows of recorded continuation.
inline std::vector<const data::LabeledWindow*> eligible_genuine(const std::vector<data::LabeledWindow>& windows,
                                                                int l_forecasting, int* excluded = nullptr) {
    std::vector<const data::LabeledWindow*> out;
    for (const auto& w : windows) {
        if (w.label != 1) continue;
        if (w.continuation.rows >= l_forecasting)
            out.push_back(&w);
        else if (excluded)
            ++*excluded;
    }
    return out;
}

/// Stacks continuation targets: positions (B x l_f x 3), trigger (B x l_f x 1).
inline std::pair<nn::Tensor, nn::Tensor> stack_targets(const std::vector<const data::LabeledWindow*>& batch,
                                                       int l_forecasting) {
    const auto bsz = static_cast<int>(batch.size());
    std::vector<float> pos(static_cast<std::size_t>(bsz) * l_forecasting * 3);
    std::vector<float> trig(static_cast<std::size_t>(bsz) * l_forecasting);
    for (int b = 0; b < bsz; ++b) {
        const auto& cont = batch[static_cast<std::size_t>(b)]->continuation;
        for (int r = 0; r < l_forecasting; ++r) {
            for (int c = 0; c < 3; ++c) pos[(static_cast<std::size_t>(b) * l_forecasting + r) * 3 + c] = static_cast<float>(cont.at(r, c));
            trig[static_cast<std::size_t>(b) * l_forecasting + r] = static_cast<float>(cont.at(r, 3));
        }
    }
    return {nn::Tensor::from_values({bsz, l_forecasting, 3}, std::move(pos)),
            nn::Tensor::from_values({bsz, l_forecasting, 1}, std::move(trig))};
}

inline nn::Tensor stage_loss(const nn::Tensor& pos_loss, const nn::Tensor& trig_loss, const nn::LossWeights& w) {
    if (w.lambda_forecast > 0.0 && w.lambda_trigger > 0.0)
        return nn::add(nn::scale(pos_loss, static_cast<float>(w.lambda_forecast)),
                       nn::scale(trig_loss, static_cast<float>(w.lambda_trigger)));
    if (w.lambda_forecast > 0.0) return nn::scale(pos_loss, static_cast<float>(w.lambda_forecast));
    return nn::scale(trig_loss, static_cast<float>(w.lambda_trigger));
}

} // namespace detail

/// Mean over windows of the squared position error between forecast blocks
/// and the matching ground-truth continuations (first 3 channels only).
inline double mean_position_mse(const std::vector<data::TimeMatrix>& blocks,
                                const std::vector<const data::LabeledWindow*>& windows) {
    if (blocks.empty() || blocks.size() != windows.size())
        throw EvalError("mean_position_mse: need equally many forecast blocks and windows, got " +
                        std::to_string(blocks.size()) + " vs " + std::to_string(windows.size()));
    double total = 0.0;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const auto& pred = blocks[i];
        const auto& gt = windows[i]->continuation;
        if (gt.rows < pred.rows) throw EvalError("mean_position_mse: window lacks tail room");
        double acc = 0.0;
        for (int r = 0; r < pred.rows; ++r)
            for (int c = 0; c < 3; ++c) {
                const double d = pred.at(r, c) - gt.at(r, c);
                acc += d * d;
            }
        total += acc / (static_cast<double>(pred.rows) * 3.0);
    }
    return total / static_cast<double>(blocks.size());
}

/// Zero-velocity reference: repeat each window's last observed row for the
/// whole horizon. Any useful forecaster must beat this on moving trajectories.
inline double persistence_baseline_mse(const std::vector<const data::LabeledWindow*>& windows, int l_forecasting) {
    if (windows.empty()) throw EvalError("persistence_baseline_mse: empty window set");
    std::vector<data::TimeMatrix> blocks;
    blocks.reserve(windows.size());
    for (const auto* w : windows) {
        data::TimeMatrix block(l_forecasting, data::kChannels);
        for (int r = 0; r < l_forecasting; ++r)
            for (int c = 0; c < data::kChannels; ++c) block.at(r, c) = w->values.at(w->values.rows - 1, c);
        blocks.push_back(std::move(block));
    }
    return mean_position_mse(blocks, windows);
}

/// Mean position MSE of the model over the genuine windows of a set that
/// carry enough continuation rows.
inline double evaluate_forecaster_mse(ForecasterModel& model, const std::vector<data::LabeledWindow>& windows,
                                      int batch_size = 32) {
    const auto eligible = detail::eligible_genuine(windows, model.spec().l_forecasting);
    if (eligible.empty()) throw EvalError("evaluate_forecaster_mse: no genuine window has the required tail room");
    std::vector<const data::TimeMatrix*> inputs;
    inputs.reserve(eligible.size());
    for (const auto* w : eligible) inputs.push_back(&w->values);
    const auto blocks = model.forecast_blocks(inputs, batch_size, /*allow_untrained=*/true);
    return mean_position_mse(blocks, eligible);
}

/// Trains the forecaster on the split's genuine day-1 windows, minimizing
/// lambda_forecast * MSE(positions) + lambda_trigger * BCE(trigger).
/// Impostor windows are ignored: forecasting models the enrolled user's own
/// motion. Windows without tail room are excluded and counted.
inline ForecastTrainResult train_forecaster(ForecasterModel& model, const data::DatasetSplit& split,
                                            const ForecastTrainOptions& options = {}, std::ostream* log = nullptr) {
    options.validate();
    const int lf = model.spec().l_forecasting;

    ForecastTrainResult result;
    auto windows = detail::eligible_genuine(split.train, lf, &result.excluded_windows);
    if (windows.empty())
        throw DataError("train_forecaster: no training window has " + std::to_string(lf) + " rows of tail room");
    result.used_windows = static_cast<int>(windows.size());

    nn::AdamOptimizer<float> optimizer(model.parameters(), options.learning_rate);
    auto dropout_rng = make_rng(derive_seed(options.seed, {purpose_tag(SeedPurpose::dropout)}));

    std::vector<std::size_t> order(windows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        auto shuffle_rng = make_rng(derive_seed(options.seed, {purpose_tag(SeedPurpose::shuffle), static_cast<std::uint64_t>(epoch)}));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double epoch_loss = 0.0;
        for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(options.batch_size)) {
            const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(options.batch_size));
            std::vector<const data::LabeledWindow*> batch;
            std::vector<const data::TimeMatrix*> inputs;
            batch.reserve(end - begin);
            inputs.reserve(end - begin);
            for (std::size_t i = begin; i < end; ++i) {
                batch.push_back(windows[order[i]]);
                inputs.push_back(&windows[order[i]]->values);
            }

            auto out = model.forward(tensor_from_batch(inputs), /*training=*/true, &dropout_rng);
            auto [target_pos, target_trig] = detail::stack_targets(batch, lf);
            auto loss = detail::stage_loss(nn::mse_loss(out.positions, target_pos),
                                           nn::bce_loss_soft(out.trigger, target_trig), options.weights);
            const double loss_value = static_cast<double>(loss.at(0));
            if (!std::isfinite(loss_value))
                throw NumericError("train_forecaster: non-finite loss at epoch " + std::to_string(epoch));

            optimizer.zero_grad();
            loss.backward();
            optimizer.step();
            epoch_loss += loss_value * static_cast<double>(batch.size());
        }
        result.loss_trace.push_back(epoch_loss / static_cast<double>(windows.size()));
        if (log) *log << "forecaster epoch " << epoch + 1 << "/" << options.epochs << " loss " << result.loss_trace.back() << "\n";

        if (options.stop_position_mse > 0.0) {
            std::vector<const data::TimeMatrix*> inputs;
            inputs.reserve(windows.size());
            for (const auto* w : windows) inputs.push_back(&w->values);
            const double mse = mean_position_mse(model.forecast_blocks(inputs, options.batch_size, /*allow_untrained=*/true), windows);
            if (mse < options.stop_position_mse) break;
        }
    }
    result.steps = static_cast<int>(optimizer.step_count());
    model.mark_trained();
    return result;
}

} // namespace foreauth::forecast
