#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "foreauth/common/error.hpp"

namespace foreauth::eval {

/// Classifier output scores partitioned by ground truth.
struct ScoreSet {
    std::vector<double> genuine;
    std::vector<double> impostor;
};

namespace detail {

inline std::pair<double, double> far_frr(const ScoreSet& scores, double theta) {
    std::size_t fa = 0;
    for (double s : scores.impostor) fa += s >= theta ? 1 : 0;
    std::size_t fr = 0;
    for (double s : scores.genuine) fr += s < theta ? 1 : 0;
    return {static_cast<double>(fa) / static_cast<double>(scores.impostor.size()),
            static_cast<double>(fr) / static_cast<double>(scores.genuine.size())};
}

} // namespace detail

/// FAR = fraction of impostor scores accepted (>= theta);
/// FRR = fraction of genuine scores rejected (< theta).
inline std::pair<double, double> compute_far_frr(const ScoreSet& scores, double theta) {
    if (scores.genuine.empty() || scores.impostor.empty())
        throw EvalError("compute_far_frr: both score classes must be non-empty");
    if (!(theta >= 0.0 && theta <= 1.0)) throw ConfigError("compute_far_frr: threshold must lie in [0,1]");
    return detail::far_frr(scores, theta);
}

/// Equal error rate and the threshold attaining it.
struct EerPoint {
    double eer = 0.0;
    double threshold = 0.0;
};

/// Sweeps thresholds over the sorted union of observed scores. FAR - FRR is
/// non-increasing along the sweep; where it crosses zero between adjacent
/// thresholds the rates are linearly interpolated. Because the interpolation
/// uses only the rate values (never the score magnitudes), the EER is exactly
/// invariant under strictly monotone transformations of the scores.
inline EerPoint compute_eer(const ScoreSet& scores) {
    if (scores.genuine.empty() || scores.impostor.empty())
        throw EvalError("compute_eer: both score classes must be non-empty");

    std::vector<double> thresholds;
    thresholds.reserve(scores.genuine.size() + scores.impostor.size());
    thresholds.insert(thresholds.end(), scores.genuine.begin(), scores.genuine.end());
    thresholds.insert(thresholds.end(), scores.impostor.begin(), scores.impostor.end());
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    // A sentinel above every score closes the sweep: FAR 0, FRR 1.
    const double top = thresholds.back();
    double prev_theta = thresholds.front();
    auto [prev_far, prev_frr] = detail::far_frr(scores, prev_theta);
    if (prev_far == prev_frr) return {prev_far, prev_theta};

    for (std::size_t i = 1; i <= thresholds.size(); ++i) {
        double theta;
        double far;
        double frr;
        if (i < thresholds.size()) {
            theta = thresholds[i];
            std::tie(far, frr) = detail::far_frr(scores, theta);
        } else {
            theta = std::nextafter(top, 2.0);
            far = 0.0;
            frr = 1.0;
        }
        if (far == frr) return {far, theta};
        if (far < frr) {
            // Crossing between prev_theta and theta: interpolate the rates.
            const double prev_diff = prev_far - prev_frr; // > 0
            const double diff = far - frr;                // < 0
            const double alpha = prev_diff / (prev_diff - diff);
            const double far_i = prev_far + alpha * (far - prev_far);
            const double frr_i = prev_frr + alpha * (frr - prev_frr);
            return {(far_i + frr_i) / 2.0, prev_theta + alpha * (theta - prev_theta)};
        }
        prev_theta = theta;
        prev_far = far;
        prev_frr = frr;
    }
    throw EvalError("compute_eer: threshold sweep failed to bracket the crossing");
}

/// Per-subject EERs and their arithmetic mean.
struct MeanEer {
    std::map<std::string, double> per_subject;
    double mean_eer = 0.0;
};

inline MeanEer aggregate_eer(const std::map<std::string, ScoreSet>& per_user) {
    if (per_user.empty()) throw EvalError("aggregate_eer: no subjects");
    MeanEer out;
    double total = 0.0;
    for (const auto& [user, scores] : per_user) {
        const double eer = compute_eer(scores).eer;
        out.per_subject[user] = eer;
        total += eer;
    }
    out.mean_eer = total / static_cast<double>(per_user.size());
    return out;
}

/// 100 * (no_forecast - best_forecast) / no_forecast.
inline double reduction_percentage(double no_forecast_eer, double best_forecast_eer) {
    if (no_forecast_eer <= 0.0) throw EvalError("reduction_percentage: baseline EER must be positive");
    return 100.0 * (no_forecast_eer - best_forecast_eer) / no_forecast_eer;
}

} // namespace foreauth::eval
