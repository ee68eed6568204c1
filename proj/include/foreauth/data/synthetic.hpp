#pragma once

#include <array>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "foreauth/common/error.hpp"
#include "foreauth/common/random.hpp"
#include "foreauth/data/csv_io.hpp"
#include "foreauth/data/session.hpp"

namespace foreauth::data {

/// Per-user parameters of the synthetic reach-lift-throw generator.
struct SyntheticUserParams {
    std::uint64_t rng_seed = 0;
    std::array<double, 3> apex{0.0, 1.6, -0.5}; // top of the wind-up, meters
    double throw_duration_scale = 0.35;         // fraction of the trial spent ball->release
    double release_time_fraction = 0.65;        // when the ball leaves the hand
    std::array<double, 3> noise_sigma{0.01, 0.01, 0.01};
    double trigger_on_fraction = 0.25;
    double trigger_off_fraction = 0.65;

    void validate() const {
        for (double s : noise_sigma)
            if (!(s >= 0.0)) throw ConfigError("noise sigma must be >= 0");
        auto open_unit = [](double v, const char* name) {
            if (!(v > 0.0 && v < 1.0)) throw ConfigError(std::string(name) + " must lie in (0,1)");
        };
        open_unit(throw_duration_scale, "throw duration scale");
        open_unit(release_time_fraction, "release-time fraction");
        open_unit(trigger_on_fraction, "trigger on fraction");
        open_unit(trigger_off_fraction, "trigger off fraction");
        if (trigger_on_fraction >= trigger_off_fraction)
            throw ConfigError("trigger on fraction must precede trigger off fraction");
        if (throw_duration_scale >= release_time_fraction)
            throw ConfigError("throw duration scale must be smaller than the release-time fraction");
    }
};

namespace detail {

/// Minimum-jerk easing: zero velocity and acceleration at both endpoints.
inline double min_jerk(double tau) {
    const double t3 = tau * tau * tau;
    return 10.0 * t3 - 15.0 * t3 * tau + 6.0 * t3 * tau * tau;
}

struct Keyframe {
    double time; // normalized trial time in [0,1]
    std::array<double, 3> pos;
};

inline std::array<double, 3> shifted(const std::array<double, 3>& base, double dx, double dy, double dz) {
    return {base[0] + dx, base[1] + dy, base[2] + dz};
}

/// Keyframe schedule: rest -> ball pickup -> apex -> release -> rest. All
/// poses ride on the user's apex so users differ along the whole trajectory.
inline std::vector<Keyframe> keyframes(const SyntheticUserParams& p) {
    const std::array<double, 3> rest = shifted(p.apex, -0.10, -0.80, 0.10);
    const std::array<double, 3> ball = shifted(p.apex, 0.05, -0.60, 0.15);
    const std::array<double, 3> release = shifted(p.apex, 0.05, -0.20, -0.30);
    const double t_release = p.release_time_fraction;
    const double t_ball = t_release - p.throw_duration_scale;
    const double t_apex = t_release - 0.35 * p.throw_duration_scale;
    return {{0.0, rest}, {t_ball, ball}, {t_apex, p.apex}, {t_release, release}, {1.0, rest}};
}

inline std::array<double, 3> sample_position(const std::vector<Keyframe>& frames, double tau) {
    std::size_t seg = 0;
    while (seg + 2 < frames.size() && tau > frames[seg + 1].time) ++seg;
    const auto& a = frames[seg];
    const auto& b = frames[seg + 1];
    const double span = b.time - a.time;
    const double s = span > 0.0 ? min_jerk((tau - a.time) / span) : 0.0;
    return {a.pos[0] + (b.pos[0] - a.pos[0]) * s,
            a.pos[1] + (b.pos[1] - a.pos[1]) * s,
            a.pos[2] + (b.pos[2] - a.pos[2]) * s};
}

} // namespace detail

/// One synthetic trial: a smooth throw arc with additive Gaussian position
/// noise and a strictly binary trigger that is high on exactly one contiguous
/// segment. The noise stream is seeded per (user, day, session), so zero
/// sigma reproduces the same trial bit-for-bit.
inline Session generate_session(const SyntheticUserParams& params, const std::string& user_id, int day,
                                int session_index, int length = kSessionLength) {
    params.validate();
    if (length < 2) throw ConfigError("synthetic session length must be at least 2");
    const auto frames = detail::keyframes(params);
    auto rng = make_rng(derive_seed(params.rng_seed, {purpose_tag(SeedPurpose::synth_noise),
                                                      static_cast<std::uint64_t>(day),
                                                      static_cast<std::uint64_t>(session_index)}));
    std::normal_distribution<double> unit(0.0, 1.0);

    Session s;
    s.user_id = user_id;
    s.day = day;
    s.session_index = session_index;
    s.samples = TimeMatrix(length, kChannels);
    for (int t = 0; t < length; ++t) {
        const double tau = static_cast<double>(t) / static_cast<double>(length - 1);
        auto pos = detail::sample_position(frames, tau);
        for (int c = 0; c < 3; ++c) {
            const double sigma = params.noise_sigma[static_cast<std::size_t>(c)];
            s.samples.at(t, c) = pos[static_cast<std::size_t>(c)] + (sigma > 0.0 ? sigma * unit(rng) : 0.0);
        }
        s.samples.at(t, 3) = (tau >= params.trigger_on_fraction && tau < params.trigger_off_fraction) ? 1.0 : 0.0;
    }
    return s;
}

/// Draws a population of distinct users: wide pose spread, small noise.
inline std::vector<SyntheticUserParams> random_user_params(int n_users, std::uint64_t master_seed) {
    if (n_users < 2) throw ConfigError("synthetic dataset needs at least 2 users");
    std::vector<SyntheticUserParams> out;
    out.reserve(static_cast<std::size_t>(n_users));
    for (int i = 0; i < n_users; ++i) {
        auto rng = make_rng(derive_seed(master_seed, {purpose_tag(SeedPurpose::synth_params), static_cast<std::uint64_t>(i)}));
        auto uniform = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
        SyntheticUserParams p;
        p.rng_seed = derive_seed(master_seed, {purpose_tag(SeedPurpose::synth_noise), static_cast<std::uint64_t>(i)});
        p.apex = {uniform(-0.5, 0.5), uniform(1.4, 2.0), uniform(-0.9, -0.3)};
        p.release_time_fraction = uniform(0.55, 0.75);
        p.throw_duration_scale = uniform(0.25, 0.45);
        for (auto& s : p.noise_sigma) s = uniform(0.004, 0.012);
        p.trigger_on_fraction = uniform(0.15, 0.30);
        p.trigger_off_fraction = uniform(0.55, 0.75);
        out.push_back(p);
    }
    return out;
}

inline std::string synthetic_user_id(int index) {
    std::string idx = std::to_string(index);
    if (idx.size() < 2) idx.insert(idx.begin(), '0');
    return "user" + idx;
}

/// Generates the full corpus: n_users x 2 days x sessions_per_day trials.
inline Corpus generate_synthetic_dataset(const std::vector<SyntheticUserParams>& users, int sessions_per_day = 10,
                                         int length = kSessionLength) {
    if (users.size() < 2) throw ConfigError("synthetic dataset needs at least 2 users");
    if (sessions_per_day < 1) throw ConfigError("sessions per day must be positive");
    Corpus corpus;
    corpus.sessions.reserve(users.size() * 2 * static_cast<std::size_t>(sessions_per_day));
    for (std::size_t i = 0; i < users.size(); ++i)
        for (int day = 1; day <= 2; ++day)
            for (int k = 0; k < sessions_per_day; ++k)
                corpus.sessions.push_back(generate_session(users[i], synthetic_user_id(static_cast<int>(i)), day, k, length));
    return corpus;
}

} // namespace foreauth::data
