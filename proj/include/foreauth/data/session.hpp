#pragma once

#include <string>
#include <vector>

#include "foreauth/common/error.hpp"

namespace foreauth::data {

/// Feature channels per timestamp: x, y, z position (meters) + trigger in [0,1].
inline constexpr int kChannels = 4;
inline constexpr int kPositionChannels = 3;
/// Canonical timestamps per recorded session (one 3-second trial).
inline constexpr int kSessionLength = 135;
/// Milliseconds between consecutive timestamps (3000 ms / 135).
inline constexpr double kTimestampSpacingMs = 3000.0 / kSessionLength;

/// Plain row-major matrix of time-series values (rows = timestamps).
struct TimeMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> values;

    TimeMatrix() = default;
    TimeMatrix(int r, int c) : rows(r), cols(c), values(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), 0.0) {
        if (r < 0 || c < 0) throw ShapeError("TimeMatrix: negative dimensions");
    }

    double& at(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
    bool empty() const { return rows == 0; }

    /// Copy of rows [start, start+len).
    TimeMatrix slice_rows(int start, int len) const {
        if (start < 0 || len < 0 || start + len > rows)
            throw ShapeError("TimeMatrix: slice [" + std::to_string(start) + "," + std::to_string(start + len) +
                             ") out of " + std::to_string(rows) + " rows");
        TimeMatrix out(len, cols);
        std::copy(values.begin() + static_cast<std::ptrdiff_t>(start) * cols,
                  values.begin() + static_cast<std::ptrdiff_t>(start + len) * cols, out.values.begin());
        return out;
    }

    bool operator==(const TimeMatrix& o) const { return rows == o.rows && cols == o.cols && values == o.values; }
};

/// One recorded trial: a (T x 4) trajectory tagged with its origin.
struct Session {
    std::string user_id;
    int day = 0;           // 1 or 2
    int session_index = 0; // 0..9 within that day
    TimeMatrix samples;    // (T x kChannels)

    int length() const { return samples.rows; }
};

/// Sliding-window geometry: window of n rows advanced by stride l.
struct WindowSpec {
    int window_size = 45; // n
    int stride = 5;       // l

    void validate() const {
        if (window_size < 1) throw ConfigError("WindowSpec: window_size must be >= 1, got " + std::to_string(window_size));
        if (stride < 1) throw ConfigError("WindowSpec: stride must be >= 1, got " + std::to_string(stride));
    }
};

/// One training/evaluation example. Impostor windows record which genuine
/// window they mirror (same start timestamp, same length).
struct LabeledWindow {
    TimeMatrix values;        // (n x kChannels)
    int label = 1;            // 1 genuine, 0 impostor
    std::string source_user;  // who actually produced the motion
    int source_day = 0;
    int source_session = 0;   // session_index within that day
    int start_timestamp = 0;
    int matched_to = -1;      // genuine-window ordinal an impostor mirrors; -1 for genuine
    /// Ground-truth continuation rows [start+n, start+n+tail) from the same
    /// source session; empty when the window sits too close to the session
    /// end for the requested tail.
    TimeMatrix continuation;

    bool has_continuation() const { return !continuation.empty(); }
};

/// Day-partitioned window sets for one enrolled user.
struct DatasetSplit {
    std::string user_id;
    std::vector<LabeledWindow> train;      // day 1, minus validation
    std::vector<LabeledWindow> validation; // held-out day-1 fraction
    std::vector<LabeledWindow> test;       // day 2
    std::uint64_t rng_seed = 0;
};

} // namespace foreauth::data
