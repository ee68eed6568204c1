#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <vector>

#include "foreauth/auth/model.hpp"
#include "foreauth/auth/train.hpp"
#include "foreauth/common/error.hpp"
#include "foreauth/data/session.hpp"
#include "foreauth/forecast/model.hpp"

namespace foreauth::eval {

/// Wall-clock statistics for one forecast+classify step per window, reported
/// against the inter-timestamp budget of the 45 Hz capture stream.
struct LatencyStats {
    int repetitions = 0;
    double median_ms = 0.0;
    double p95_ms = 0.0;
    double min_ms = 0.0;
    double max_ms = 0.0;
    double mean_ms = 0.0;
    double budget_ms = data::kTimestampSpacingMs;

    bool within(double ceiling_ms) const { return median_ms < ceiling_ms; }
};

/// Times the full per-window authentication step: forecast the continuation
/// (when a forecaster is given), concatenate, classify. Models are warmed up
/// before measurement; each repetition is timed individually.
inline LatencyStats timing_benchmark(forecast::ForecasterModel* forecaster, auth::AuthModel& model,
                                     const data::TimeMatrix& window, int repetitions) {
    if (repetitions < 100) throw ConfigError("timing_benchmark: repetitions must be >= 100");

    auto run_once = [&]() {
        if (!forecaster) return model.classify_window(window).genuine_probability;
        auto block = forecast::forecast_block(forecaster->forecast(window, /*allow_untrained=*/true));
        return model.classify_window(auth::concat_forecast(window, block)).genuine_probability;
    };

    double sink = 0.0;
    for (int i = 0; i < 10; ++i) sink += run_once();
    if (!std::isfinite(sink)) throw NumericError("timing_benchmark: warm-up produced non-finite scores");

    std::vector<double> samples(static_cast<std::size_t>(repetitions));
    for (auto& ms : samples) {
        const auto t0 = std::chrono::steady_clock::now();
        sink += run_once();
        const auto t1 = std::chrono::steady_clock::now();
        ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    }
    std::sort(samples.begin(), samples.end());

    LatencyStats stats;
    stats.repetitions = repetitions;
    stats.min_ms = samples.front();
    stats.max_ms = samples.back();
    const std::size_t n = samples.size();
    stats.median_ms = n % 2 == 1 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
    const std::size_t p95 = std::min(n - 1, static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n))) - 1);
    stats.p95_ms = samples[p95];
    stats.mean_ms = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(n);
    return stats;
}

} // namespace foreauth::eval
