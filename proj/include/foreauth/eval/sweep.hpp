#pragma once

#include <atomic>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "foreauth/auth/model.hpp"
#include "foreauth/auth/train.hpp"
#include "foreauth/common/error.hpp"
#include "foreauth/common/random.hpp"
#include "foreauth/data/csv_io.hpp"
#include "foreauth/data/windows.hpp"
#include "foreauth/eval/metrics.hpp"
#include "foreauth/forecast/model.hpp"
#include "foreauth/forecast/spec.hpp"
#include "foreauth/forecast/train.hpp"

namespace foreauth::eval {

namespace fs = std::filesystem;

/// Axes of one experiment table: window sizes by forecast horizons.
/// Horizon 0 denotes the no-forecasting column.
struct GridDefinition {
    std::vector<int> window_sizes;
    std::vector<int> horizons;

    bool operator==(const GridDefinition&) const = default;
};

/// Window sizes 25..95 step 5, no forecasting: 15 cells.
inline GridDefinition no_forecast_grid() {
    GridDefinition def;
    for (int ws = 25; ws <= 95; ws += 5) def.window_sizes.push_back(ws);
    def.horizons = {0};
    return def;
}

/// Window sizes 25..85 step 10 by horizons 10..70 step 10; cells beyond the
/// combined-length envelope stay absent, giving the staircase layout.
inline GridDefinition forecast_grid() {
    GridDefinition def;
    for (int ws = 25; ws <= 85; ws += 10) def.window_sizes.push_back(ws);
    for (int h = 10; h <= 70; h += 10) def.horizons.push_back(h);
    return def;
}

/// A cell is populated only when window plus horizon fit inside the session
/// envelope; the rest of the table stays absent.
inline bool cell_admissible(int window_size, int horizon) {
    return window_size + horizon <= forecast::kMaxCombinedLength;
}

struct SweepCellResult {
    int window_size = 0;
    int horizon = 0;
    bool present = false; // false where window_size + horizon exceed the envelope
    double mean_eer = 0.0;
    bool has_mse = false;
    double mean_mse = 0.0; // forecaster position MSE on day-2 windows
    std::map<std::string, double> per_user_eer;
    std::map<std::string, double> per_user_mse;
};

struct SweepGrid {
    GridDefinition definition;
    auth::ClassifierVariant variant = auth::ClassifierVariant::fcn;
    auth::TrainMode mode = auth::TrainMode::no_forecast;
    std::uint64_t master_seed = 0;
    std::vector<SweepCellResult> cells; // window-size major, horizon minor

    const SweepCellResult* find(int window_size, int horizon) const {
        for (const auto& c : cells)
            if (c.window_size == window_size && c.horizon == horizon) return &c;
        return nullptr;
    }
};

struct SweepOptions {
    int stride = 5;
    double validation_fraction = 0.2;
    std::uint64_t master_seed = 1;
    int forecaster_epochs = 200;
    int classifier_epochs = 200;
    int batch_size = 32;
    double forecaster_learning_rate = 1e-4;
    nn::ModelConfig forecaster_config;          // encoder-decoder forecaster dimensions
    auth::ClassifierConfig classifier_template; // dimensions only; variant and input_length are set per cell
    int workers = 1;
    fs::path cache_dir; // empty disables the on-disk cell cache
    std::ostream* log = nullptr;

    void validate() const {
        if (stride < 1) throw ConfigError("SweepOptions: stride must be >= 1");
        if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
            throw ConfigError("SweepOptions: validation_fraction must lie in [0,1)");
        if (forecaster_epochs < 1 || classifier_epochs < 1) throw ConfigError("SweepOptions: epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("SweepOptions: batch_size must be >= 1");
        if (forecaster_learning_rate <= 0.0) throw ConfigError("SweepOptions: forecaster_learning_rate must be positive");
        if (workers < 1) throw ConfigError("SweepOptions: workers must be >= 1");
    }
};

namespace detail {

/// Doubles cross the cache boundary as raw bit patterns so a resumed sweep
/// is bit-identical to an uninterrupted one.
inline std::string bits_of(double v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(std::bit_cast<std::uint64_t>(v)));
    return buf;
}

inline double double_from_bits(const std::string& hex) {
    return std::bit_cast<double>(static_cast<std::uint64_t>(std::stoull(hex, nullptr, 16)));
}

/// Everything that determines a cell's value, folded into one tag; a cache
/// entry written under a different configuration is recomputed, not reused.
inline std::uint64_t sweep_fingerprint(const data::Corpus& corpus, auth::ClassifierVariant variant,
                                       auth::TrainMode mode, const SweepOptions& opt) {
    std::string key;
    key += std::to_string(opt.master_seed) + "|" + std::to_string(opt.stride) + "|" +
           data::detail::format_number(opt.validation_fraction) + "|" + std::to_string(opt.forecaster_epochs) + "|" +
           std::to_string(opt.classifier_epochs) + "|" + std::to_string(opt.batch_size) + "|" +
           data::detail::format_number(opt.forecaster_learning_rate) + "|";
    key += auth::variant_name(variant);
    key += mode == auth::TrainMode::with_forecast ? "|wf|" : "|nf|";
    const auto& f = opt.forecaster_config;
    for (int v : {f.d_model, f.n_head, f.d_q, f.d_k, f.d_v, f.d_hidden, f.n_encoder_layers, f.n_decoder_layers})
        key += std::to_string(v) + ",";
    const auto& c = opt.classifier_template;
    for (int v : c.filters) key += std::to_string(v) + ",";
    for (int v : c.kernels) key += std::to_string(v) + ",";
    for (int v : {c.tf.d_model, c.tf.n_head, c.tf.d_q, c.tf.d_v, c.tf.d_hidden, c.tf.n_encoder_layers})
        key += std::to_string(v) + ",";
    key += data::detail::format_number(c.learning_rate) + "|";
    for (const auto& user : corpus.users()) key += user + ";";
    return fnv1a64(key);
}

inline fs::path cell_cache_path(const fs::path& dir, auth::ClassifierVariant variant, auth::TrainMode mode, int ws,
                                int horizon) {
    std::string name = std::string("cell_") + auth::variant_name(variant) +
                       (mode == auth::TrainMode::with_forecast ? "_wf" : "_nf") + "_ws" + std::to_string(ws) + "_h" +
                       std::to_string(horizon) + ".json";
    return dir / name;
}

inline std::optional<SweepCellResult> load_cached_cell(const fs::path& path, std::uint64_t fingerprint) {
    std::ifstream in(path);
    if (!in) return std::nullopt;
    nlohmann::json j;
    try {
        in >> j;
        if (j.value("schema", 0) != 1) return std::nullopt;
        if (j.value("fingerprint", std::string()) != bits_of(std::bit_cast<double>(fingerprint))) return std::nullopt;
        SweepCellResult cell;
        cell.window_size = j.at("window_size").get<int>();
        cell.horizon = j.at("horizon").get<int>();
        cell.present = true;
        for (const auto& [user, entry] : j.at("per_user").items()) {
            cell.per_user_eer[user] = double_from_bits(entry.at("eer_bits").get<std::string>());
            if (entry.contains("mse_bits")) cell.per_user_mse[user] = double_from_bits(entry.at("mse_bits").get<std::string>());
        }
        return cell;
    } catch (const nlohmann::json::exception&) {
        return std::nullopt; // unreadable cache entries are recomputed
    }
}

inline void store_cached_cell(const fs::path& path, std::uint64_t fingerprint, const SweepCellResult& cell) {
    nlohmann::json j;
    j["schema"] = 1;
    j["fingerprint"] = bits_of(std::bit_cast<double>(fingerprint));
    j["window_size"] = cell.window_size;
    j["horizon"] = cell.horizon;
    nlohmann::json per_user = nlohmann::json::object();
    for (const auto& [user, eer] : cell.per_user_eer) {
        nlohmann::json entry = {{"eer", eer}, {"eer_bits", bits_of(eer)}};
        auto it = cell.per_user_mse.find(user);
        if (it != cell.per_user_mse.end()) {
            entry["mse"] = it->second;
            entry["mse_bits"] = bits_of(it->second);
        }
        per_user[user] = std::move(entry);
    }
    j["per_user"] = std::move(per_user);
    j["mean_eer"] = cell.mean_eer;
    if (cell.has_mse) j["mean_mse"] = cell.mean_mse;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write sweep cache file " + path.string());
    out << j.dump(2) << "\n";
}

/// Ordered-map iteration fixes the summation order, so the means are
/// reproducible bit for bit from the per-user values alone.
inline void finalize_cell(SweepCellResult& cell) {
    double total = 0.0;
    for (const auto& [user, eer] : cell.per_user_eer) total += eer;
    cell.mean_eer = total / static_cast<double>(cell.per_user_eer.size());
    if (!cell.per_user_mse.empty()) {
        double mse = 0.0;
        for (const auto& [user, v] : cell.per_user_mse) mse += v;
        cell.mean_mse = mse / static_cast<double>(cell.per_user_mse.size());
        cell.has_mse = true;
    }
}

/// Trains per-user forecaster/classifier pairs for one (window, horizon)
/// cell and reports the day-2 mean EER (and forecaster MSE when forecasting).
inline SweepCellResult compute_cell(const data::Corpus& corpus, int ws, int horizon, auth::ClassifierVariant variant,
                                    auth::TrainMode mode, const SweepOptions& opt, std::ostream* log) {
    SweepCellResult cell;
    cell.window_size = ws;
    cell.horizon = horizon;
    cell.present = true;
    const bool with_forecast = mode == auth::TrainMode::with_forecast && horizon > 0;
    const std::uint64_t cell_seed =
        derive_seed(opt.master_seed, {static_cast<std::uint64_t>(ws), static_cast<std::uint64_t>(horizon)});

    for (const auto& user : corpus.users()) {
        const std::uint64_t user_seed = derive_seed(cell_seed, {fnv1a64(user)});
        auto split = data::build_split(corpus, data::WindowSpec{ws, opt.stride}, user, opt.validation_fraction,
                                       user_seed, with_forecast ? horizon : 0);

        std::optional<forecast::ForecasterModel> forecaster;
        if (with_forecast) {
            forecaster.emplace(opt.forecaster_config, forecast::make_spec(ws, horizon), user_seed);
            forecast::ForecastTrainOptions fopt;
            fopt.epochs = opt.forecaster_epochs;
            fopt.batch_size = opt.batch_size;
            fopt.learning_rate = opt.forecaster_learning_rate;
            fopt.seed = user_seed;
            forecast::train_forecaster(*forecaster, split, fopt, log);
            cell.per_user_mse[user] = forecast::evaluate_forecaster_mse(*forecaster, split.test, opt.batch_size);
        }

        auto config = opt.classifier_template;
        config.variant = variant;
        config.input_length = ws + (with_forecast ? horizon : 0);
        auth::AuthModel model(user, config, user_seed);
        auth::AuthTrainOptions aopt;
        aopt.epochs = opt.classifier_epochs;
        aopt.batch_size = opt.batch_size;
        aopt.seed = user_seed;
        auth::train_classifier(model, split, mode, forecaster ? &*forecaster : nullptr, aopt, log);

        auto scores = auth::build_score_set(model, split.test, forecaster ? &*forecaster : nullptr, opt.batch_size);
        cell.per_user_eer[user] = compute_eer(scores).eer;
    }
    finalize_cell(cell);
    return cell;
}

} // namespace detail

/// Runs the (window size x horizon) experiment grid: per cell, one forecaster
/// and one classifier per user, mean day-2 EER over users. Cells exceeding
/// the combined-length envelope are skipped and marked absent. Completed
/// cells are cached under options.cache_dir keyed by a configuration
/// fingerprint, so interrupted sweeps resume bit-identically.
inline SweepGrid run_sweep(const data::Corpus& corpus, const GridDefinition& definition,
                           auth::ClassifierVariant variant, auth::TrainMode mode, const SweepOptions& options = {}) {
    options.validate();
    if (definition.window_sizes.empty() || definition.horizons.empty())
        throw ConfigError("run_sweep: the grid definition has no cells");
    if (corpus.users().size() < 2) throw DataError("run_sweep: the corpus needs at least 2 users");
    for (int h : definition.horizons) {
        if (mode == auth::TrainMode::no_forecast && h != 0)
            throw ConfigError("run_sweep: a no_forecast sweep uses horizons {0}, got " + std::to_string(h));
        if (mode == auth::TrainMode::with_forecast && h < 1)
            throw ConfigError("run_sweep: a with_forecast sweep needs horizons >= 1, got " + std::to_string(h));
    }

    SweepGrid grid;
    grid.definition = definition;
    grid.variant = variant;
    grid.mode = mode;
    grid.master_seed = options.master_seed;
    grid.cells.resize(definition.window_sizes.size() * definition.horizons.size());

    std::vector<std::size_t> pending;
    for (std::size_t wi = 0; wi < definition.window_sizes.size(); ++wi)
        for (std::size_t hi = 0; hi < definition.horizons.size(); ++hi) {
            const std::size_t index = wi * definition.horizons.size() + hi;
            auto& cell = grid.cells[index];
            cell.window_size = definition.window_sizes[wi];
            cell.horizon = definition.horizons[hi];
            cell.present = cell_admissible(cell.window_size, cell.horizon);
            if (cell.present) pending.push_back(index);
        }

    const bool caching = !options.cache_dir.empty();
    std::uint64_t fingerprint = 0;
    if (caching) {
        fs::create_directories(options.cache_dir);
        fingerprint = detail::sweep_fingerprint(corpus, variant, mode, options);
    }

    std::mutex log_mutex;
    const int workers = std::min<int>(options.workers, static_cast<int>(pending.size()));
    auto work = [&](std::size_t index) {
        auto& cell = grid.cells[index];
        const fs::path cache_path =
            caching ? detail::cell_cache_path(options.cache_dir, variant, mode, cell.window_size, cell.horizon)
                    : fs::path{};
        if (caching) {
            if (auto cached = detail::load_cached_cell(cache_path, fingerprint)) {
                cached->present = true;
                detail::finalize_cell(*cached);
                cell = std::move(*cached);
                if (options.log) {
                    std::lock_guard<std::mutex> lock(log_mutex);
                    *options.log << "cell ws=" << cell.window_size << " h=" << cell.horizon << " restored from cache\n";
                }
                return;
            }
        }
        // Per-epoch training logs are only forwarded when single-threaded;
        // parallel workers would interleave them.
        cell = detail::compute_cell(corpus, cell.window_size, cell.horizon, variant, mode, options,
                                    workers == 1 ? options.log : nullptr);
        if (caching) detail::store_cached_cell(cache_path, fingerprint, cell);
        if (options.log) {
            std::lock_guard<std::mutex> lock(log_mutex);
            *options.log << "cell ws=" << cell.window_size << " h=" << cell.horizon << " mean_eer=" << cell.mean_eer;
            if (cell.has_mse) *options.log << " mean_mse=" << cell.mean_mse;
            *options.log << "\n";
        }
    };

    if (workers <= 1) {
        for (std::size_t index : pending) work(index);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < pending.size(); i = next.fetch_add(1)) work(pending[i]);
            });
        for (auto& t : pool) t.join();
    }
    return grid;
}

/// Forecaster accuracy as a function of the decoder overlap, for one fixed
/// (window, horizon) cell: the data series behind the overlap-length study.
struct OverlapPoint {
    int overlap = 0;
    double mean_mse = 0.0;
    std::map<std::string, double> per_user_mse;
};

struct OverlapSeries {
    int l_window = 0;
    int l_forecasting = 0;
    std::vector<OverlapPoint> points;

    /// Max minus min of the mean MSE across overlap values; reported, never
    /// asserted against a magnitude.
    double spread() const {
        if (points.empty()) return 0.0;
        double lo = points.front().mean_mse, hi = points.front().mean_mse;
        for (const auto& p : points) {
            lo = std::min(lo, p.mean_mse);
            hi = std::max(hi, p.mean_mse);
        }
        return hi - lo;
    }
};

/// Every admissible overlap for a window: {5, 10, ..., l_window - 5}.
inline std::vector<int> default_overlap_grid(int l_window) {
    std::vector<int> overlaps;
    for (int o = 5; o <= l_window - 5; o += 5) overlaps.push_back(o);
    return overlaps;
}

/// Trains one forecaster per (user, overlap) and records the day-2 position
/// MSE. An empty overlap list means the full admissible grid.
inline OverlapSeries run_overlap_sweep(const data::Corpus& corpus, int l_window, int l_forecasting,
                                       std::vector<int> overlaps, const SweepOptions& options = {}) {
    options.validate();
    if (l_forecasting < 1) throw ConfigError("run_overlap_sweep: l_forecasting must be >= 1");
    if (overlaps.empty()) overlaps = default_overlap_grid(l_window);

    OverlapSeries series;
    series.l_window = l_window;
    series.l_forecasting = l_forecasting;
    for (int overlap : overlaps) {
        forecast::make_spec(l_window, l_forecasting, overlap); // validates the combination
        OverlapPoint point;
        point.overlap = overlap;
        const std::uint64_t point_seed =
            derive_seed(options.master_seed, {static_cast<std::uint64_t>(l_window),
                                              static_cast<std::uint64_t>(l_forecasting),
                                              static_cast<std::uint64_t>(overlap)});
        for (const auto& user : corpus.users()) {
            const std::uint64_t user_seed = derive_seed(point_seed, {fnv1a64(user)});
            auto split = data::build_split(corpus, data::WindowSpec{l_window, options.stride}, user,
                                           options.validation_fraction, user_seed, l_forecasting);
            forecast::ForecasterModel forecaster(options.forecaster_config,
                                                 forecast::make_spec(l_window, l_forecasting, overlap), user_seed);
            forecast::ForecastTrainOptions fopt;
            fopt.epochs = options.forecaster_epochs;
            fopt.batch_size = options.batch_size;
            fopt.seed = user_seed;
            forecast::train_forecaster(forecaster, split, fopt, options.log);
            point.per_user_mse[user] = forecast::evaluate_forecaster_mse(forecaster, split.test, options.batch_size);
        }
        double total = 0.0;
        for (const auto& [user, mse] : point.per_user_mse) total += mse;
        point.mean_mse = total / static_cast<double>(point.per_user_mse.size());
        series.points.push_back(std::move(point));
        if (options.log)
            *options.log << "overlap " << overlap << " mean_mse " << series.points.back().mean_mse << "\n";
    }
    return series;
}

} // namespace foreauth::eval
