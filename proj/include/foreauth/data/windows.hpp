#pragma once

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "foreauth/common/error.hpp"
#include "foreauth/common/random.hpp"
#include "foreauth/data/csv_io.hpp"
#include "foreauth/data/session.hpp"

namespace foreauth::data {

struct WindowSlice {
    int start = 0;
    TimeMatrix values;
};

/// Non-overlapping-stride sliding windows over one session: starts 0, l, 2l, ...
/// while start + n <= T. Yields floor((T - n) / l) + 1 windows.
inline std::vector<WindowSlice> slide_windows(const TimeMatrix& samples, const WindowSpec& spec) {
    spec.validate();
    const int T = samples.rows;
    const int n = spec.window_size;
    const int l = spec.stride;
    if (n > T)
        throw ConfigError("window size " + std::to_string(n) + " exceeds session length " + std::to_string(T));
    std::vector<WindowSlice> out;
    out.reserve(static_cast<std::size_t>((T - n) / l) + 1);
    for (int start = 0; start + n <= T; start += l)
        out.push_back({start, samples.slice_rows(start, n)});
    return out;
}

inline int window_count(int session_length, const WindowSpec& spec) {
    if (spec.window_size > session_length) return 0;
    return (session_length - spec.window_size) / spec.stride + 1;
}

/// For each genuine window, draws an impostor window of the same size from a
/// uniformly random *other* user (then a uniformly random same-day session of
/// that user), sliced at the same start timestamp. One impostor per genuine
/// window keeps the class balance at 1:1.
inline std::vector<LabeledWindow> sample_impostors(const Corpus& corpus,
                                                   const std::vector<LabeledWindow>& genuine,
                                                   std::mt19937_64& rng,
                                                   int tail = 0) {
    const auto users = corpus.users();
    if (users.size() < 2) throw DataError("impostor sampling needs at least 2 users, corpus has " + std::to_string(users.size()));

    std::vector<LabeledWindow> out;
    out.reserve(genuine.size());
    for (const auto& g : genuine) {
        std::vector<std::string> others;
        others.reserve(users.size() - 1);
        for (const auto& u : users)
            if (u != g.source_user) others.push_back(u);

        const int n = g.values.rows;
        // Resample until the drawn session admits the same slice. Canonical
        // corpora have equal-length sessions, so this loops only on malformed input.
        for (int attempt = 0;; ++attempt) {
            if (attempt >= 1000)
                throw DataError("no impostor session admits a window of size " + std::to_string(n) + " at start " +
                                std::to_string(g.start_timestamp));
            std::uniform_int_distribution<std::size_t> pick_user(0, others.size() - 1);
            const std::string& other = others[pick_user(rng)];
            const auto sessions = corpus.sessions_of(other, g.source_day);
            if (sessions.empty()) continue;
            std::uniform_int_distribution<std::size_t> pick_session(0, sessions.size() - 1);
            const Session* s = sessions[pick_session(rng)];
            if (g.start_timestamp + n > s->samples.rows) continue;

            LabeledWindow w;
            w.values = s->samples.slice_rows(g.start_timestamp, n);
            w.label = 0;
            w.source_user = s->user_id;
            w.source_day = s->day;
            w.source_session = s->session_index;
            w.start_timestamp = g.start_timestamp;
            w.matched_to = static_cast<int>(out.size());
            if (tail > 0 && g.start_timestamp + n + tail <= s->samples.rows)
                w.continuation = s->samples.slice_rows(g.start_timestamp + n, tail);
            out.push_back(std::move(w));
            break;
        }
    }
    return out;
}

namespace detail {

inline std::vector<LabeledWindow> genuine_windows(const Corpus& corpus, const std::string& user, int day,
                                                  const WindowSpec& spec, int tail) {
    std::vector<LabeledWindow> out;
    for (const Session* s : corpus.sessions_of(user, day)) {
        for (auto& slice : slide_windows(s->samples, spec)) {
            LabeledWindow w;
            w.values = std::move(slice.values);
            w.label = 1;
            w.source_user = user;
            w.source_day = day;
            w.source_session = s->session_index;
            w.start_timestamp = slice.start;
            if (tail > 0 && slice.start + spec.window_size + tail <= s->samples.rows)
                w.continuation = s->samples.slice_rows(slice.start + spec.window_size, tail);
            out.push_back(std::move(w));
        }
    }
    return out;
}

} // namespace detail

/// Builds the per-user train/validation/test split: day-1 windows are split
/// into training and validation (keeping genuine/impostor pairs together so
/// both stay balanced), day-2 windows form the test set. `tail` rows following
/// each window are attached as the forecasting continuation when available.
/// Deterministic given (seed, user): reruns yield identical splits.
inline DatasetSplit build_split(const Corpus& corpus, const WindowSpec& spec, const std::string& user,
                                double validation_fraction, std::uint64_t seed, int tail = 0) {
    if (validation_fraction < 0.0 || validation_fraction >= 1.0)
        throw ConfigError("validation fraction must lie in [0,1)");
    if (corpus.sessions_of(user, 1).empty() || corpus.sessions_of(user, 2).empty())
        throw DataError("user " + user + " needs sessions on both days");

    const std::uint64_t user_hash = fnv1a64(user);

    DatasetSplit split;
    split.user_id = user;
    split.rng_seed = seed;

    // Day 1: genuine + matched impostors, then carve out the validation tail.
    auto train_genuine = detail::genuine_windows(corpus, user, 1, spec, tail);
    if (train_genuine.empty()) throw DataError("user " + user + " has no day-1 windows at this window size");
    auto imp_rng = make_rng(derive_seed(seed, {purpose_tag(SeedPurpose::impostor_train), user_hash}));
    auto train_impostor = sample_impostors(corpus, train_genuine, imp_rng, tail);

    const std::size_t n_pairs = train_genuine.size();
    std::vector<std::size_t> order(n_pairs);
    for (std::size_t i = 0; i < n_pairs; ++i) order[i] = i;
    auto val_rng = make_rng(derive_seed(seed, {purpose_tag(SeedPurpose::validation), user_hash}));
    std::shuffle(order.begin(), order.end(), val_rng);
    const auto n_val = static_cast<std::size_t>(static_cast<double>(n_pairs) * validation_fraction);

    for (std::size_t rank = 0; rank < n_pairs; ++rank) {
        const std::size_t i = order[rank];
        auto& dest = rank < n_val ? split.validation : split.train;
        dest.push_back(train_genuine[i]);
        train_impostor[i].matched_to = static_cast<int>(dest.size()) - 1;
        dest.push_back(train_impostor[i]);
    }

    // Day 2: held-out test windows with freshly sampled impostors.
    auto test_genuine = detail::genuine_windows(corpus, user, 2, spec, tail);
    if (test_genuine.empty()) throw DataError("user " + user + " has no day-2 windows at this window size");
    auto test_rng = make_rng(derive_seed(seed, {purpose_tag(SeedPurpose::impostor_test), user_hash}));
    auto test_impostor = sample_impostors(corpus, test_genuine, test_rng, tail);
    split.test.reserve(test_genuine.size() * 2);
    for (std::size_t i = 0; i < test_genuine.size(); ++i) {
        split.test.push_back(std::move(test_genuine[i]));
        test_impostor[i].matched_to = static_cast<int>(split.test.size()) - 1;
        split.test.push_back(std::move(test_impostor[i]));
    }
    return split;
}

} // namespace foreauth::data
