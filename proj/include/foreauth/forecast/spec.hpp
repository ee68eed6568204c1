#pragma once

#include <string>

#include "foreauth/common/error.hpp"

namespace foreauth::forecast {

/// Maximum combined window + horizon length supported by the sweep grid.
inline constexpr int kMaxCombinedLength = 95;

/// Geometry of one forecasting configuration. The encoder reads l_window
/// timestamps; the decoder input is the last l_overlap of them followed by
/// l_forecasting zero rows; the model emits l_forecasting future timestamps.
/// l_forecasting = 0 marks a forecasting-disabled configuration (the
/// authentication pipeline then runs on raw windows).
struct ForecastSpec {
    int l_window = 45;
    int l_initial = 25;
    int l_overlap = 20;
    int l_forecasting = 30;

    void validate() const {
        if (l_window < 10)
            throw ConfigError("ForecastSpec: l_window must be at least 10, got " + std::to_string(l_window));
        if (l_forecasting < 0)
            throw ConfigError("ForecastSpec: l_forecasting must be non-negative, got " + std::to_string(l_forecasting));
        if (l_initial + l_overlap != l_window)
            throw ConfigError("ForecastSpec: l_initial + l_overlap = " + std::to_string(l_initial + l_overlap) +
                              " must equal l_window = " + std::to_string(l_window));
        if (l_overlap < 5 || l_overlap > l_window - 5)
            throw ConfigError("ForecastSpec: l_overlap must lie in [5, l_window-5], got " + std::to_string(l_overlap));
        if (l_window + l_forecasting > kMaxCombinedLength)
            throw ConfigError("ForecastSpec: l_window + l_forecasting = " + std::to_string(l_window + l_forecasting) +
                              " exceeds the grid envelope of " + std::to_string(kMaxCombinedLength));
    }

    /// Rows of the decoder input sequence.
    int decoder_length() const { return l_overlap + l_forecasting; }
    /// Rows of the classifier input in with-forecast mode.
    int combined_length() const { return l_window + l_forecasting; }

    bool operator==(const ForecastSpec&) const = default;
};

/// Lower median of the admissible overlap grid {5, 10, ..., l_window-5};
/// the lower median keeps the value on the 5-step grid for even counts.
inline int default_overlap(int l_window) {
    if (l_window < 10) throw ConfigError("default_overlap: l_window must be at least 10");
    const int count = (l_window - 10) / 5 + 1;
    return 5 * ((count - 1) / 2 + 1);
}

inline ForecastSpec make_spec(int l_window, int l_forecasting, int l_overlap = -1) {
    ForecastSpec spec;
    spec.l_window = l_window;
    spec.l_forecasting = l_forecasting;
    spec.l_overlap = l_overlap < 0 ? default_overlap(l_window) : l_overlap;
    spec.l_initial = l_window - spec.l_overlap;
    spec.validate();
    return spec;
}

} // namespace foreauth::forecast
