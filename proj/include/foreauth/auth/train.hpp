#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "foreauth/auth/model.hpp"
#include "foreauth/common/error.hpp"
#include "foreauth/common/random.hpp"
#include "foreauth/data/session.hpp"
#include "foreauth/eval/metrics.hpp"
#include "foreauth/forecast/model.hpp"
#include "foreauth/nn/adam.hpp"
#include "foreauth/nn/losses.hpp"

namespace foreauth::auth {

/// no_forecast scores raw windows; with_forecast appends the forecaster's
/// continuation to every window (impostors included) before classifying.
enum class TrainMode { no_forecast, with_forecast };

struct AuthTrainOptions {
    int epochs = 200;
    int batch_size = 32;
    std::uint64_t seed = 0;
    double learning_rate = 0.0;    // 0 selects the classifier's default
    nn::LossWeights weights{};     // joint mode only; staged training is pure BCE
    bool joint = false;            // optimize the forecaster together with the classifier
    double forecaster_learning_rate = 1e-4; // joint mode step size for the forecaster
};

struct AuthEpochMetrics {
    int epoch = 0;          // 1-based
    double train_loss = 0.0;
    double validation_eer = 0.0;
};

struct AuthTrainResult {
    std::vector<AuthEpochMetrics> history;
    int best_epoch = 0;
    double best_validation_eer = 1.0;
    int excluded_windows = 0; // joint mode: windows without a usable continuation
};

/// Materializes classifier inputs for a window set: the raw windows, or each
/// window concatenated with its forecast continuation. A null forecaster
/// means a zero horizon, so the inputs are the windows themselves.
inline std::vector<data::TimeMatrix> build_classifier_inputs(const std::vector<data::LabeledWindow>& windows,
                                                             forecast::ForecasterModel* forecaster, int batch_size) {
    std::vector<data::TimeMatrix> out;
    out.reserve(windows.size());
    if (!forecaster) {
        for (const auto& w : windows) out.push_back(w.values);
        return out;
    }
    std::vector<const data::TimeMatrix*> ptrs;
    ptrs.reserve(windows.size());
    for (const auto& w : windows) ptrs.push_back(&w.values);
    auto blocks = forecaster->forecast_blocks(ptrs, batch_size, /*allow_untrained=*/true);
    for (std::size_t i = 0; i < windows.size(); ++i) out.push_back(concat_forecast(windows[i].values, blocks[i]));
    return out;
}

/// Scores a window set and partitions the genuine probabilities by label.
inline eval::ScoreSet build_score_set(AuthModel& model, const std::vector<data::LabeledWindow>& windows,
                                      forecast::ForecasterModel* forecaster = nullptr, int batch_size = 32) {
    auto inputs = build_classifier_inputs(windows, forecaster, batch_size);
    std::vector<const data::TimeMatrix*> ptrs;
    ptrs.reserve(inputs.size());
    for (const auto& m : inputs) ptrs.push_back(&m);
    auto probs = model.score_windows(ptrs, batch_size);
    eval::ScoreSet scores;
    for (std::size_t i = 0; i < windows.size(); ++i)
        (windows[i].label == 1 ? scores.genuine : scores.impostor).push_back(probs[i]);
    return scores;
}

namespace detail {

inline std::pair<int, int> count_labels(const std::vector<data::LabeledWindow>& windows) {
    int genuine = 0, impostor = 0;
    for (const auto& w : windows) (w.label == 1 ? genuine : impostor) += 1;
    return {genuine, impostor};
}

inline nn::Tensor label_tensor(const std::vector<const data::LabeledWindow*>& batch) {
    std::vector<float> vals(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) vals[i] = batch[i]->label == 1 ? 1.0f : 0.0f;
    return nn::Tensor::from_values({static_cast<int>(batch.size()), 1}, std::move(vals));
}

inline eval::ScoreSet score_inputs(AuthModel& model, const std::vector<data::TimeMatrix>& inputs,
                                   const std::vector<data::LabeledWindow>& windows, int batch_size) {
    std::vector<const data::TimeMatrix*> ptrs;
    ptrs.reserve(inputs.size());
    for (const auto& m : inputs) ptrs.push_back(&m);
    auto probs = model.score_windows(ptrs, batch_size);
    eval::ScoreSet scores;
    for (std::size_t i = 0; i < windows.size(); ++i)
        (windows[i].label == 1 ? scores.genuine : scores.impostor).push_back(probs[i]);
    return scores;
}

inline std::vector<std::vector<float>> copy_param_values(nn::ParamList<float>& params) {
    std::vector<std::vector<float>> out;
    out.reserve(params.size());
    for (auto& p : params) out.push_back(p.tensor.values());
    return out;
}

inline void restore_param_values(nn::ParamList<float>& params, const std::vector<std::vector<float>>& values) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i].tensor.node()->values = values[i];
}

} // namespace detail

/// Trains one user's classifier on its day-1 split.
///
/// The default is staged: the forecaster (if any) stays frozen, every
/// window's continuation is forecast once up front, and the classifier
/// minimizes plain BCE on the genuine probability. Joint mode instead
/// backpropagates a weighted sum of label, forecast, and trigger losses
/// through both networks; it needs ground-truth continuations, so windows
/// without one are excluded (and counted in the result).
///
/// Every epoch the validation set is scored and its EER recorded; the
/// parameters (and batch-norm statistics) of the best epoch are restored
/// before returning. Ties prefer the latest epoch, which has had the most
/// label-loss training at the same error rate.
inline AuthTrainResult train_classifier(AuthModel& model, const data::DatasetSplit& split, TrainMode mode,
                                        forecast::ForecasterModel* forecaster = nullptr,
                                        const AuthTrainOptions& options = {}, std::ostream* log = nullptr) {
    if (options.epochs < 1) throw ConfigError("train_classifier: epochs must be >= 1");
    if (options.batch_size < 1) throw ConfigError("train_classifier: batch size must be >= 1");
    options.weights.validate();
    if (mode == TrainMode::no_forecast) forecaster = nullptr;
    const bool joint = options.joint;
    if (joint && mode != TrainMode::with_forecast)
        throw ConfigError("train_classifier: joint training requires with_forecast mode");
    if (joint && !forecaster) throw ConfigError("train_classifier: joint training requires a forecaster");

    auto [train_genuine, train_impostor] = detail::count_labels(split.train);
    if (train_genuine == 0 || train_impostor == 0)
        throw DataError("train_classifier: split for '" + split.user_id +
                        "' is degenerate; training needs both genuine and impostor windows");
    auto [val_genuine, val_impostor] = detail::count_labels(split.validation);
    if (val_genuine == 0 || val_impostor == 0)
        throw DataError("train_classifier: split for '" + split.user_id +
                        "' has no usable validation set; hold out a validation fraction with both classes");

    if (forecaster && split.train.front().values.rows != forecaster->spec().l_window)
        throw ConfigError("train_classifier: windows have " + std::to_string(split.train.front().values.rows) +
                          " rows but the forecaster expects l_window=" + std::to_string(forecaster->spec().l_window));
    const int expected_rows = split.train.front().values.rows + (forecaster ? forecaster->spec().l_forecasting : 0);
    if (expected_rows != model.config().input_length)
        throw ConfigError("train_classifier: classifier input_length is " + std::to_string(model.config().input_length) +
                          " but inputs have " + std::to_string(expected_rows) +
                          " rows (window size plus forecast horizon)");

    const double lr = options.learning_rate > 0.0 ? options.learning_rate : model.config().effective_learning_rate();
    nn::AdamOptimizer<float> optimizer(model.parameters(), lr);
    std::optional<nn::AdamOptimizer<float>> forecaster_optimizer;
    if (joint) forecaster_optimizer.emplace(forecaster->parameters(), options.forecaster_learning_rate);

    auto shuffle_rng = make_rng(derive_seed(options.seed, {purpose_tag(SeedPurpose::shuffle), fnv1a64(split.user_id)}));
    auto dropout_rng = make_rng(derive_seed(options.seed, {purpose_tag(SeedPurpose::dropout), fnv1a64(split.user_id)}));

    AuthTrainResult result;

    // Staged mode forecasts each window exactly once; the blocks are reused
    // across every epoch because the forecaster never moves.
    std::vector<data::TimeMatrix> train_inputs;
    std::vector<data::TimeMatrix> validation_inputs;
    std::vector<const data::LabeledWindow*> train_windows; // joint mode, continuation-bearing only
    if (!joint) {
        train_inputs = build_classifier_inputs(split.train, forecaster, options.batch_size);
        validation_inputs = build_classifier_inputs(split.validation, forecaster, options.batch_size);
    } else {
        const int horizon = forecaster->spec().l_forecasting;
        for (const auto& w : split.train) {
            if (w.has_continuation() && w.continuation.rows == horizon)
                train_windows.push_back(&w);
            else
                ++result.excluded_windows;
        }
        if (result.excluded_windows > 0 && log)
            *log << "user " << split.user_id << " joint training: excluded " << result.excluded_windows
                 << " window(s) without a " << horizon << "-row continuation\n";
        if (train_windows.empty())
            throw DataError("train_classifier: no training window has the " + std::to_string(horizon) +
                            "-row continuation joint mode needs; rebuild the split with a matching tail");
        int genuine_left = 0;
        for (const auto* w : train_windows) genuine_left += w->label == 1 ? 1 : 0;
        if (genuine_left == 0 || genuine_left == static_cast<int>(train_windows.size()))
            throw DataError("train_classifier: joint-eligible windows are single-class for '" + split.user_id + "'");
    }

    const std::size_t n_train = joint ? train_windows.size() : train_inputs.size();
    std::vector<std::size_t> order(n_train);
    std::iota(order.begin(), order.end(), 0u);

    ModelSnapshot best_snapshot;
    std::vector<std::vector<float>> best_forecaster_params;
    auto forecaster_params = joint ? forecaster->parameters() : nn::ParamList<float>{};

    for (int epoch = 1; epoch <= options.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;
        int batches = 0;
        for (std::size_t begin = 0; begin < n_train; begin += static_cast<std::size_t>(options.batch_size)) {
            const std::size_t end = std::min(n_train, begin + static_cast<std::size_t>(options.batch_size));
            optimizer.zero_grad();
            if (forecaster_optimizer) forecaster_optimizer->zero_grad();

            nn::Tensor loss;
            if (!joint) {
                std::vector<const data::TimeMatrix*> chunk;
                std::vector<const data::LabeledWindow*> labels;
                for (std::size_t i = begin; i < end; ++i) {
                    chunk.push_back(&train_inputs[order[i]]);
                    labels.push_back(&split.train[order[i]]);
                }
                auto probs = model.forward(forecast::tensor_from_batch(chunk), /*training=*/true, &dropout_rng);
                loss = nn::bce_loss(nn::slice_lastdim(probs, 1, 1), detail::label_tensor(labels));
            } else {
                // Genuine windows first so the forecast-loss rows form a
                // contiguous leading block of the batch tensor.
                std::vector<const data::LabeledWindow*> batch;
                for (std::size_t i = begin; i < end; ++i) batch.push_back(train_windows[order[i]]);
                std::stable_partition(batch.begin(), batch.end(),
                                      [](const data::LabeledWindow* w) { return w->label == 1; });
                int n_genuine = 0;
                for (const auto* w : batch) n_genuine += w->label == 1 ? 1 : 0;

                std::vector<const data::TimeMatrix*> chunk;
                for (const auto* w : batch) chunk.push_back(&w->values);
                auto window_tensor = forecast::tensor_from_batch(chunk);
                auto out = forecaster->forward(window_tensor, /*training=*/true, &dropout_rng);
                auto combined = nn::concat_time<float>({window_tensor, nn::concat_lastdim<float>({out.positions, out.trigger})});
                auto probs = model.forward(combined, /*training=*/true, &dropout_rng);
                loss = nn::bce_loss(nn::slice_lastdim(probs, 1, 1), detail::label_tensor(batch));

                // Forecast and trigger terms use genuine continuations only:
                // the forecaster must never be fit to another user's motion.
                if (n_genuine > 0) {
                    const int horizon = forecaster->spec().l_forecasting;
                    std::vector<float> pos_target(static_cast<std::size_t>(n_genuine) * horizon * 3);
                    std::vector<float> trig_target(static_cast<std::size_t>(n_genuine) * horizon);
                    for (int b = 0; b < n_genuine; ++b)
                        for (int r = 0; r < horizon; ++r) {
                            for (int c = 0; c < 3; ++c)
                                pos_target[(static_cast<std::size_t>(b) * horizon + r) * 3 + c] =
                                    static_cast<float>(batch[static_cast<std::size_t>(b)]->continuation.at(r, c));
                            trig_target[static_cast<std::size_t>(b) * horizon + r] =
                                static_cast<float>(batch[static_cast<std::size_t>(b)]->continuation.at(r, 3));
                        }
                    const int batch_n = static_cast<int>(batch.size());
                    if (options.weights.lambda_forecast > 0.0) {
                        auto pred = nn::slice_time(nn::reshape(out.positions, {batch_n, horizon * 3}), 0, n_genuine);
                        auto target = nn::Tensor::from_values({n_genuine, horizon * 3}, std::move(pos_target));
                        loss = nn::add(loss, nn::scale(nn::mse_loss(pred, target),
                                                       static_cast<float>(options.weights.lambda_forecast)));
                    }
                    if (options.weights.lambda_trigger > 0.0) {
                        auto pred = nn::slice_time(nn::reshape(out.trigger, {batch_n, horizon}), 0, n_genuine);
                        auto target = nn::Tensor::from_values({n_genuine, horizon}, std::move(trig_target));
                        loss = nn::add(loss, nn::scale(nn::bce_loss_soft(pred, target),
                                                       static_cast<float>(options.weights.lambda_trigger)));
                    }
                }
            }

            loss.backward();
            optimizer.step();
            if (forecaster_optimizer) forecaster_optimizer->step();
            loss_sum += static_cast<double>(loss.at(0));
            ++batches;
        }

        if (joint) validation_inputs = build_classifier_inputs(split.validation, forecaster, options.batch_size);
        auto scores = detail::score_inputs(model, validation_inputs, split.validation, options.batch_size);
        const double eer = eval::compute_eer(scores).eer;
        const double mean_loss = loss_sum / static_cast<double>(batches);
        result.history.push_back({epoch, mean_loss, eer});
        if (result.best_epoch == 0 || eer <= result.best_validation_eer) {
            result.best_epoch = epoch;
            result.best_validation_eer = eer;
            best_snapshot = model.snapshot();
            if (joint) best_forecaster_params = detail::copy_param_values(forecaster_params);
        }
        if (log)
            *log << "user " << split.user_id << " epoch " << epoch << "/" << options.epochs << " loss " << mean_loss
                 << " val_eer " << eer << "\n";
    }

    model.restore(best_snapshot);
    if (joint) {
        detail::restore_param_values(forecaster_params, best_forecaster_params);
        forecaster->mark_trained();
    }
    return result;
}

} // namespace foreauth::auth
