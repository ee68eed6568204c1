#include "foreauth/cli.hpp"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "foreauth/auth/model.hpp"
#include "foreauth/auth/train.hpp"
#include "foreauth/common/error.hpp"
#include "foreauth/common/random.hpp"
#include "foreauth/common/version.hpp"
#include "foreauth/data/csv_io.hpp"
#include "foreauth/data/synthetic.hpp"
#include "foreauth/data/windows.hpp"
#include "foreauth/eval/bench.hpp"
#include "foreauth/eval/metrics.hpp"
#include "foreauth/eval/report.hpp"
#include "foreauth/eval/sweep.hpp"
#include "foreauth/forecast/model.hpp"
#include "foreauth/forecast/spec.hpp"
#include "foreauth/forecast/train.hpp"
#include "foreauth/io/checkpoint.hpp"

namespace foreauth::cli {
namespace {

namespace fs = std::filesystem;
using OptionMap = std::map<std::string, std::string>;

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string join_ints(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

/// The run manifest pins the tool version and every effective option, plus a
/// hash of the whole configuration: enough to replay the run exactly. It
/// carries no timestamps, so identical runs produce identical manifests.
void write_run_manifest(const fs::path& out_dir, const std::string& command, const OptionMap& options,
                        const std::string& filename) {
    nlohmann::json j;
    j["tool"] = "foreauth";
    j["version"] = kToolVersion;
    j["command"] = command;
    j["options"] = options;
    std::string canonical = command;
    for (const auto& [k, v] : options) canonical += "|" + k + "=" + v;
    j["config_hash"] = hex64(fnv1a64(canonical));
    fs::create_directories(out_dir);
    const fs::path path = out_dir / filename;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write run manifest " + path.string());
    out << j.dump(2) << "\n";
}

void append_log(const fs::path& out_dir, const std::string& line) {
    fs::create_directories(out_dir);
    std::ofstream log(out_dir / "run.log", std::ios::app);
    if (log) log << line << "\n";
}

// ---------------------------------------------------------------------------
// Shared option bundles
// ---------------------------------------------------------------------------

/// Encoder-decoder forecaster dimensions, defaulting to the full-scale model.
struct ForecasterDims {
    int d_model = 512;
    int n_head = 8;
    int d_qkv = 64;
    int d_hidden = 2048;
    int enc_layers = 3;
    int dec_layers = 1;
    double dropout = 0.0;

    nn::ModelConfig to_config() const {
        nn::ModelConfig c;
        c.d_model = d_model;
        c.n_head = n_head;
        c.d_q = c.d_k = c.d_v = d_qkv;
        c.d_hidden = d_hidden;
        c.n_encoder_layers = enc_layers;
        c.n_decoder_layers = dec_layers;
        c.dropout_rate = dropout;
        return c;
    }

    void add_flags(CLI::App* cmd) {
        cmd->add_option("--d-model", d_model, "forecaster embedding width")->capture_default_str();
        cmd->add_option("--n-head", n_head, "forecaster attention heads")->capture_default_str();
        cmd->add_option("--d-qkv", d_qkv, "per-head query/key/value width")->capture_default_str();
        cmd->add_option("--d-hidden", d_hidden, "feed-forward hidden width")->capture_default_str();
        cmd->add_option("--enc-layers", enc_layers, "encoder layers")->capture_default_str();
        cmd->add_option("--dec-layers", dec_layers, "decoder layers")->capture_default_str();
        cmd->add_option("--dropout", dropout, "dropout rate during training")->capture_default_str();
    }

    void describe(OptionMap& m) const {
        m["d_model"] = std::to_string(d_model);
        m["n_head"] = std::to_string(n_head);
        m["d_qkv"] = std::to_string(d_qkv);
        m["d_hidden"] = std::to_string(d_hidden);
        m["enc_layers"] = std::to_string(enc_layers);
        m["dec_layers"] = std::to_string(dec_layers);
        m["dropout"] = data::detail::format_number(dropout);
    }
};

/// Classifier architecture flags covering both variants.
struct ClassifierDims {
    std::string variant = "fcn";
    std::vector<int> filters{128, 256, 128};
    std::vector<int> kernels{8, 5, 3};
    int tf_d_model = 512;
    int tf_n_head = 8;
    int tf_d_qkv = 64;
    int tf_d_hidden = 2048;
    int tf_layers = 2;
    double tf_dropout = 0.0;
    double learning_rate = 0.0; // 0 selects the variant default

    auth::ClassifierConfig to_config(int input_length) const {
        auth::ClassifierConfig c;
        c.variant = auth::parse_variant(variant);
        c.filters = filters;
        c.kernels = kernels;
        c.tf.d_model = tf_d_model;
        c.tf.n_head = tf_n_head;
        c.tf.d_q = c.tf.d_k = c.tf.d_v = tf_d_qkv;
        c.tf.d_hidden = tf_d_hidden;
        c.tf.n_encoder_layers = tf_layers;
        c.tf.n_decoder_layers = 0;
        c.tf.dropout_rate = tf_dropout;
        c.input_length = input_length;
        c.learning_rate = learning_rate;
        c.validate();
        return c;
    }

    void add_flags(CLI::App* cmd) {
        cmd->add_option("--variant", variant, "classifier variant")
            ->check(CLI::IsMember({"fcn", "transformer", "tf"}))
            ->capture_default_str();
        cmd->add_option("--filters", filters, "convolutional filter counts")->delimiter(',')->capture_default_str();
        cmd->add_option("--kernels", kernels, "convolutional kernel sizes")->delimiter(',')->capture_default_str();
        cmd->add_option("--tf-d-model", tf_d_model, "transformer classifier width")->capture_default_str();
        cmd->add_option("--tf-n-head", tf_n_head, "transformer classifier heads")->capture_default_str();
        cmd->add_option("--tf-d-qkv", tf_d_qkv, "transformer classifier head width")->capture_default_str();
        cmd->add_option("--tf-d-hidden", tf_d_hidden, "transformer classifier hidden width")->capture_default_str();
        cmd->add_option("--tf-layers", tf_layers, "transformer classifier encoder layers")->capture_default_str();
        cmd->add_option("--tf-dropout", tf_dropout, "transformer classifier dropout")->capture_default_str();
        cmd->add_option("--lr", learning_rate, "classifier learning rate (0 = variant default)")
            ->capture_default_str();
    }

    void describe(OptionMap& m) const {
        m["variant"] = variant;
        m["filters"] = join_ints(filters);
        m["kernels"] = join_ints(kernels);
        m["tf_d_model"] = std::to_string(tf_d_model);
        m["tf_n_head"] = std::to_string(tf_n_head);
        m["tf_d_qkv"] = std::to_string(tf_d_qkv);
        m["tf_d_hidden"] = std::to_string(tf_d_hidden);
        m["tf_layers"] = std::to_string(tf_layers);
        m["lr"] = data::detail::format_number(learning_rate);
    }
};

auth::TrainMode parse_mode(const std::string& name) {
    if (name == "no_forecast") return auth::TrainMode::no_forecast;
    if (name == "with_forecast") return auth::TrainMode::with_forecast;
    throw ConfigError("unknown mode '" + name + "' (expected no_forecast or with_forecast)");
}

data::TimeMatrix synthetic_probe_window(std::uint64_t seed, int rows) {
    auto rng = make_rng(seed);
    std::uniform_real_distribution<double> pos(-1.0, 1.0);
    std::uniform_real_distribution<double> trig(0.0, 1.0);
    data::TimeMatrix m(rows, data::kChannels);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < data::kPositionChannels; ++c) m.at(r, c) = pos(rng);
        m.at(r, data::kPositionChannels) = trig(rng);
    }
    return m;
}

/// Scores every test window (forecast-augmented when a forecaster is given)
/// and tags each score with its index in the test ordering.
std::vector<data::ScoreRecord> score_test_windows(auth::AuthModel& model,
                                                  const std::vector<data::LabeledWindow>& test,
                                                  forecast::ForecasterModel* forecaster, int batch_size) {
    const auto inputs = auth::build_classifier_inputs(test, forecaster, batch_size);
    std::vector<const data::TimeMatrix*> ptrs;
    ptrs.reserve(inputs.size());
    for (const auto& m : inputs) ptrs.push_back(&m);
    const auto probs = model.score_windows(ptrs, batch_size);
    std::vector<data::ScoreRecord> records;
    records.reserve(test.size());
    for (std::size_t i = 0; i < test.size(); ++i)
        records.push_back({model.user_id(), static_cast<int>(i), test[i].label, probs[i]});
    return records;
}

nlohmann::json timing_json(const eval::LatencyStats& stats) {
    return {{"repetitions", stats.repetitions}, {"median_ms", stats.median_ms}, {"p95_ms", stats.p95_ms},
            {"min_ms", stats.min_ms},           {"max_ms", stats.max_ms},       {"mean_ms", stats.mean_ms},
            {"budget_ms", stats.budget_ms}};
}

eval::LatencyStats timing_from_json(const nlohmann::json& j) {
    eval::LatencyStats stats;
    stats.repetitions = j.at("repetitions").get<int>();
    stats.median_ms = j.at("median_ms").get<double>();
    stats.p95_ms = j.at("p95_ms").get<double>();
    stats.min_ms = j.at("min_ms").get<double>();
    stats.max_ms = j.at("max_ms").get<double>();
    stats.mean_ms = j.at("mean_ms").get<double>();
    stats.budget_ms = j.at("budget_ms").get<double>();
    return stats;
}

// ---------------------------------------------------------------------------
// Command configurations
// ---------------------------------------------------------------------------

struct SynthCmd {
    int users = 8;
    int sessions = 10;
    std::uint64_t seed = 7;
    std::string out;
};

struct ValidateCmd {
    std::string data;
    std::string out;
};

struct TrainForecasterCmd {
    std::string data;
    std::string user;
    std::string out;
    int window_size = 45;
    int horizon = 30;
    int overlap = -1;
    int stride = 5;
    double validation_fraction = 0.2;
    int epochs = 200;
    int batch_size = 32;
    double lr = 1e-4;
    double stop_mse = 0.0;
    std::uint64_t seed = 1;
    ForecasterDims dims;
};

struct TrainAuthCmd {
    std::string data;
    std::string user;
    std::string out;
    std::string mode = "no_forecast";
    std::string forecaster_path;
    int window_size = 45;
    int horizon = 30;
    int overlap = -1;
    int stride = 5;
    double validation_fraction = 0.2;
    int epochs = 200;
    int batch_size = 32;
    std::uint64_t seed = 1;
    bool joint = false;
    double lambda_forecast = 1.0;
    double lambda_trigger = 1.0;
    int forecaster_epochs = 200;
    double forecaster_lr = 1e-4;
    ClassifierDims classifier;
    ForecasterDims forecaster_dims;
};

struct EvalCmd {
    std::string scores;
    std::string out;
    double threshold = -1.0;
};

struct SweepCmd {
    std::string data;
    std::string out;
    std::string mode = "no_forecast";
    std::vector<int> window_sizes;
    std::vector<int> horizons;
    std::uint64_t master_seed = 1;
    int stride = 5;
    double validation_fraction = 0.2;
    int forecaster_epochs = 200;
    int classifier_epochs = 200;
    int batch_size = 32;
    double forecaster_lr = 1e-4;
    int workers = 0; // 0 selects the logical core count
    bool no_cache = false;
    int overlap_window = 0;
    int overlap_horizon = 0;
    std::vector<int> overlaps;
    ClassifierDims classifier;
    ForecasterDims forecaster_dims;
};

struct BenchCmd {
    std::string out;
    std::string mode = "no_forecast";
    int window_size = 45;
    int horizon = 30;
    int repetitions = 200;
    std::uint64_t seed = 1;
    ClassifierDims classifier;
    ForecasterDims forecaster_dims;
};

struct ReportCmd {
    std::string tables;
    std::string out;
};

// ---------------------------------------------------------------------------
// Command implementations
// ---------------------------------------------------------------------------

int run_synth(const SynthCmd& cfg) {
    const auto params = data::random_user_params(cfg.users, cfg.seed);
    const auto corpus = data::generate_synthetic_dataset(params, cfg.sessions);
    const fs::path out(cfg.out);
    data::save_sessions(out, corpus);

    OptionMap options{{"users", std::to_string(cfg.users)},
                      {"sessions", std::to_string(cfg.sessions)},
                      {"seed", std::to_string(cfg.seed)},
                      {"out", cfg.out}};
    write_run_manifest(out, "synth", options, "manifest_synth.json");
    append_log(out, "synth users=" + std::to_string(cfg.users) + " seed=" + std::to_string(cfg.seed) + " status=ok");
    std::cout << "wrote " << corpus.sessions.size() << " session files for " << cfg.users << " users under "
              << cfg.out << "\n";
    return 0;
}

int run_validate(const ValidateCmd& cfg) {
    const auto corpus = data::load_sessions(cfg.data);
    const auto users = corpus.users();
    std::cout << "ok: " << users.size() << " users, " << corpus.sessions.size() << " sessions, "
              << corpus.sessions.front().length() << " timestamps per session\n";
    if (!cfg.out.empty()) {
        OptionMap options{{"data", cfg.data}};
        write_run_manifest(cfg.out, "validate-data", options, "manifest_validate-data.json");
        append_log(cfg.out, "validate-data data=" + cfg.data + " status=ok");
    }
    return 0;
}

int run_train_forecaster(const TrainForecasterCmd& cfg) {
    const auto corpus = data::load_sessions(cfg.data);
    const auto spec = forecast::make_spec(cfg.window_size, cfg.horizon, cfg.overlap);
    const auto split = data::build_split(corpus, data::WindowSpec{cfg.window_size, cfg.stride}, cfg.user,
                                         cfg.validation_fraction, cfg.seed, cfg.horizon);

    forecast::ForecasterModel model(cfg.dims.to_config(), spec, cfg.seed);
    forecast::ForecastTrainOptions opt;
    opt.epochs = cfg.epochs;
    opt.learning_rate = cfg.lr;
    opt.batch_size = cfg.batch_size;
    opt.seed = cfg.seed;
    opt.stop_position_mse = cfg.stop_mse;
    const auto result = forecast::train_forecaster(model, split, opt, &std::cerr);
    const double test_mse = forecast::evaluate_forecaster_mse(model, split.test, cfg.batch_size);

    const fs::path out(cfg.out);
    fs::create_directories(out);
    const fs::path ckpt = out / ("forecaster_" + cfg.user + ".ckpt");
    io::save_forecaster(ckpt, model);
    {
        std::ofstream trace(out / ("forecaster_" + cfg.user + "_loss.csv"), std::ios::trunc);
        trace << "epoch,train_loss\n";
        for (std::size_t e = 0; e < result.loss_trace.size(); ++e)
            trace << (e + 1) << ',' << data::detail::format_number(result.loss_trace[e]) << "\n";
    }

    OptionMap options{{"data", cfg.data},
                      {"user", cfg.user},
                      {"window_size", std::to_string(cfg.window_size)},
                      {"horizon", std::to_string(cfg.horizon)},
                      {"overlap", std::to_string(spec.l_overlap)},
                      {"stride", std::to_string(cfg.stride)},
                      {"validation_fraction", data::detail::format_number(cfg.validation_fraction)},
                      {"epochs", std::to_string(cfg.epochs)},
                      {"batch_size", std::to_string(cfg.batch_size)},
                      {"lr", data::detail::format_number(cfg.lr)},
                      {"seed", std::to_string(cfg.seed)},
                      {"out", cfg.out}};
    cfg.dims.describe(options);
    write_run_manifest(out, "train-forecaster", options, "manifest_train-forecaster_" + cfg.user + ".json");
    append_log(out, "train-forecaster user=" + cfg.user + " epochs=" + std::to_string(cfg.epochs) + " status=ok");
    std::cout << "user=" << cfg.user << " train_loss=" << data::detail::format_number(result.loss_trace.back())
              << " test_position_mse=" << data::detail::format_number(test_mse) << " checkpoint=" << ckpt.string()
              << "\n";
    return 0;
}

int run_train_auth(const TrainAuthCmd& cfg) {
    const auto corpus = data::load_sessions(cfg.data);
    const auto mode = parse_mode(cfg.mode);
    const bool with_forecast = mode == auth::TrainMode::with_forecast;
    const int tail = with_forecast ? cfg.horizon : 0;
    const auto split = data::build_split(corpus, data::WindowSpec{cfg.window_size, cfg.stride}, cfg.user,
                                         cfg.validation_fraction, cfg.seed, tail);

    std::optional<forecast::ForecasterModel> forecaster;
    if (with_forecast) {
        if (!cfg.forecaster_path.empty()) {
            forecaster.emplace(io::load_forecaster(cfg.forecaster_path));
        } else {
            // No checkpoint given: fit the per-user forecaster inline first.
            forecaster.emplace(cfg.forecaster_dims.to_config(),
                               forecast::make_spec(cfg.window_size, cfg.horizon, cfg.overlap), cfg.seed);
            forecast::ForecastTrainOptions fopt;
            fopt.epochs = cfg.forecaster_epochs;
            fopt.learning_rate = cfg.forecaster_lr;
            fopt.batch_size = cfg.batch_size;
            fopt.seed = cfg.seed;
            forecast::train_forecaster(*forecaster, split, fopt, &std::cerr);
        }
    }

    const int input_length = cfg.window_size + (with_forecast ? forecaster->spec().l_forecasting : 0);
    auth::AuthModel model(cfg.user, cfg.classifier.to_config(input_length), cfg.seed);
    auth::AuthTrainOptions opt;
    opt.epochs = cfg.epochs;
    opt.batch_size = cfg.batch_size;
    opt.seed = cfg.seed;
    opt.learning_rate = cfg.classifier.learning_rate;
    opt.weights.lambda_forecast = cfg.lambda_forecast;
    opt.weights.lambda_trigger = cfg.lambda_trigger;
    opt.joint = cfg.joint;
    opt.forecaster_learning_rate = cfg.forecaster_lr;
    const auto result =
        auth::train_classifier(model, split, mode, forecaster ? &*forecaster : nullptr, opt, &std::cerr);

    const auto records = score_test_windows(model, split.test, forecaster ? &*forecaster : nullptr, cfg.batch_size);
    eval::ScoreSet test_scores;
    for (const auto& r : records)
        (r.label == 1 ? test_scores.genuine : test_scores.impostor).push_back(r.genuine_probability);
    const auto test_eer = eval::compute_eer(test_scores);

    const fs::path out(cfg.out);
    fs::create_directories(out);
    const fs::path ckpt = out / ("classifier_" + cfg.user + ".ckpt");
    io::save_classifier(ckpt, model);
    if (forecaster && cfg.forecaster_path.empty())
        io::save_forecaster(out / ("forecaster_" + cfg.user + ".ckpt"), *forecaster);
    data::save_scores(out / ("scores_" + cfg.user + ".csv"), records);
    {
        std::ofstream hist(out / ("history_" + cfg.user + ".csv"), std::ios::trunc);
        hist << "epoch,train_loss,validation_eer\n";
        for (const auto& m : result.history)
            hist << m.epoch << ',' << data::detail::format_number(m.train_loss) << ','
                 << data::detail::format_number(m.validation_eer) << "\n";
    }

    OptionMap options{{"data", cfg.data},
                      {"user", cfg.user},
                      {"mode", cfg.mode},
                      {"forecaster", cfg.forecaster_path},
                      {"window_size", std::to_string(cfg.window_size)},
                      {"horizon", std::to_string(with_forecast ? cfg.horizon : 0)},
                      {"stride", std::to_string(cfg.stride)},
                      {"validation_fraction", data::detail::format_number(cfg.validation_fraction)},
                      {"epochs", std::to_string(cfg.epochs)},
                      {"batch_size", std::to_string(cfg.batch_size)},
                      {"seed", std::to_string(cfg.seed)},
                      {"joint", cfg.joint ? "true" : "false"},
                      {"lambda_forecast", data::detail::format_number(cfg.lambda_forecast)},
                      {"lambda_trigger", data::detail::format_number(cfg.lambda_trigger)},
                      {"out", cfg.out}};
    cfg.classifier.describe(options);
    write_run_manifest(out, "train-auth", options, "manifest_train-auth_" + cfg.user + ".json");
    append_log(out, "train-auth user=" + cfg.user + " mode=" + cfg.mode + " status=ok");
    std::cout << "user=" << cfg.user << " best_epoch=" << result.best_epoch
              << " validation_eer=" << data::detail::format_number(result.best_validation_eer)
              << " test_eer=" << data::detail::format_number(test_eer.eer) << " checkpoint=" << ckpt.string() << "\n";
    return 0;
}

int run_eval(const EvalCmd& cfg) {
    const auto records = data::load_scores(cfg.scores);
    std::map<std::string, eval::ScoreSet> per_user;
    for (const auto& r : records)
        (r.label == 1 ? per_user[r.user].genuine : per_user[r.user].impostor).push_back(r.genuine_probability);
    const auto aggregate = eval::aggregate_eer(per_user);

    std::map<std::string, eval::EerPoint> points;
    for (const auto& [user, set] : per_user) points[user] = eval::compute_eer(set);
    for (const auto& [user, point] : points) {
        std::cout << "user=" << user << " eer=" << data::detail::format_number(point.eer)
                  << " threshold=" << data::detail::format_number(point.threshold);
        if (cfg.threshold >= 0.0) {
            const auto [far, frr] = eval::compute_far_frr(per_user.at(user), cfg.threshold);
            std::cout << " far=" << data::detail::format_number(far) << " frr=" << data::detail::format_number(frr);
        }
        std::cout << "\n";
    }
    std::cout << "mean_eer=" << data::detail::format_number(aggregate.mean_eer) << " over "
              << aggregate.per_subject.size() << " user(s)\n";

    if (!cfg.out.empty()) {
        const fs::path out(cfg.out);
        fs::create_directories(out);
        std::ofstream metrics(out / "eval_metrics.csv", std::ios::trunc);
        metrics << "user,eer,threshold\n";
        for (const auto& [user, point] : points)
            metrics << user << ',' << data::detail::format_number(point.eer) << ','
                    << data::detail::format_number(point.threshold) << "\n";
        metrics << "mean," << data::detail::format_number(aggregate.mean_eer) << ",\n";
        OptionMap options{{"scores", cfg.scores},
                          {"threshold", cfg.threshold >= 0.0 ? data::detail::format_number(cfg.threshold) : ""}};
        write_run_manifest(out, "eval", options, "manifest_eval.json");
        append_log(out, "eval scores=" + cfg.scores + " status=ok");
    }
    return 0;
}

int run_sweep_cmd(const SweepCmd& cfg) {
    const auto corpus = data::load_sessions(cfg.data);
    const auto mode = parse_mode(cfg.mode);
    const auto variant = auth::parse_variant(cfg.classifier.variant);

    eval::GridDefinition definition =
        mode == auth::TrainMode::with_forecast ? eval::forecast_grid() : eval::no_forecast_grid();
    if (!cfg.window_sizes.empty()) definition.window_sizes = cfg.window_sizes;
    if (!cfg.horizons.empty()) definition.horizons = cfg.horizons;

    const fs::path out(cfg.out);
    eval::SweepOptions opt;
    opt.stride = cfg.stride;
    opt.validation_fraction = cfg.validation_fraction;
    opt.master_seed = cfg.master_seed;
    opt.forecaster_epochs = cfg.forecaster_epochs;
    opt.classifier_epochs = cfg.classifier_epochs;
    opt.batch_size = cfg.batch_size;
    opt.forecaster_learning_rate = cfg.forecaster_lr;
    opt.forecaster_config = cfg.forecaster_dims.to_config();
    opt.classifier_template = cfg.classifier.to_config(/*input_length=*/definition.window_sizes.front());
    opt.workers = cfg.workers > 0 ? cfg.workers : std::max(1u, std::thread::hardware_concurrency());
    if (!cfg.no_cache) opt.cache_dir = out / "cache";
    opt.log = &std::cerr;

    const auto grid = eval::run_sweep(corpus, definition, variant, mode, opt);

    eval::OverlapSeries overlap_series;
    const bool has_overlap = cfg.overlap_window > 0;
    if (has_overlap) {
        if (cfg.overlap_horizon < 1)
            throw ConfigError("sweep: --overlap-horizon must be >= 1 when --overlap-window is set");
        overlap_series =
            eval::run_overlap_sweep(corpus, cfg.overlap_window, cfg.overlap_horizon, cfg.overlaps, opt);
    }

    eval::ReportInputs inputs;
    if (mode == auth::TrainMode::with_forecast)
        inputs.with_forecast = &grid;
    else
        inputs.no_forecast = &grid;
    if (has_overlap) inputs.overlaps.push_back(&overlap_series);
    eval::emit_report(out, inputs);

    OptionMap options{{"data", cfg.data},
                      {"mode", cfg.mode},
                      {"window_sizes", join_ints(definition.window_sizes)},
                      {"horizons", join_ints(definition.horizons)},
                      {"master_seed", std::to_string(cfg.master_seed)},
                      {"stride", std::to_string(cfg.stride)},
                      {"validation_fraction", data::detail::format_number(cfg.validation_fraction)},
                      {"forecaster_epochs", std::to_string(cfg.forecaster_epochs)},
                      {"classifier_epochs", std::to_string(cfg.classifier_epochs)},
                      {"batch_size", std::to_string(cfg.batch_size)},
                      {"forecaster_lr", data::detail::format_number(cfg.forecaster_lr)},
                      {"workers", std::to_string(opt.workers)},
                      {"cache", cfg.no_cache ? "off" : "on"},
                      {"out", cfg.out}};
    cfg.classifier.describe(options);
    cfg.forecaster_dims.describe(options);
    if (has_overlap) {
        options["overlap_window"] = std::to_string(cfg.overlap_window);
        options["overlap_horizon"] = std::to_string(cfg.overlap_horizon);
        options["overlaps"] = join_ints(cfg.overlaps);
    }
    write_run_manifest(out, "sweep", options, "manifest_sweep.json");
    append_log(out, "sweep mode=" + cfg.mode + " variant=" + cfg.classifier.variant + " status=ok");

    int present = 0;
    for (const auto& cell : grid.cells) present += cell.present ? 1 : 0;
    std::cout << "swept " << present << " of " << grid.cells.size() << " cells; artifacts under " << cfg.out << "\n";
    return 0;
}

int run_bench(const BenchCmd& cfg) {
    const auto mode = parse_mode(cfg.mode);
    const bool with_forecast = mode == auth::TrainMode::with_forecast;
    const int input_length = cfg.window_size + (with_forecast ? cfg.horizon : 0);

    std::optional<forecast::ForecasterModel> forecaster;
    if (with_forecast)
        forecaster.emplace(cfg.forecaster_dims.to_config(), forecast::make_spec(cfg.window_size, cfg.horizon),
                           cfg.seed);
    auth::AuthModel model("bench", cfg.classifier.to_config(input_length), cfg.seed);
    const auto window = synthetic_probe_window(cfg.seed, cfg.window_size);
    const auto stats = eval::timing_benchmark(forecaster ? &*forecaster : nullptr, model, window, cfg.repetitions);

    std::cout << "repetitions=" << stats.repetitions << " median_ms=" << data::detail::format_number(stats.median_ms)
              << " p95_ms=" << data::detail::format_number(stats.p95_ms)
              << " min_ms=" << data::detail::format_number(stats.min_ms)
              << " max_ms=" << data::detail::format_number(stats.max_ms)
              << " budget_ms=" << data::detail::format_number(stats.budget_ms) << "\n";
    std::cout << "sample-spacing budget: " << (stats.within(stats.budget_ms) ? "within" : "exceeded")
              << "; 50 ms ceiling: " << (stats.within(50.0) ? "within" : "exceeded") << "\n";

    if (!cfg.out.empty()) {
        const fs::path out(cfg.out);
        fs::create_directories(out);
        std::ofstream timing(out / "timing.json", std::ios::trunc);
        timing << timing_json(stats).dump(2) << "\n";
        OptionMap options{{"mode", cfg.mode},
                          {"window_size", std::to_string(cfg.window_size)},
                          {"horizon", std::to_string(with_forecast ? cfg.horizon : 0)},
                          {"repetitions", std::to_string(cfg.repetitions)},
                          {"seed", std::to_string(cfg.seed)}};
        cfg.classifier.describe(options);
        cfg.forecaster_dims.describe(options);
        write_run_manifest(out, "bench", options, "manifest_bench.json");
        append_log(out, "bench mode=" + cfg.mode + " status=ok");
    }
    return 0;
}

int run_report(const ReportCmd& cfg) {
    const fs::path tables(cfg.tables);
    std::optional<eval::SweepGrid> no_forecast;
    std::optional<eval::SweepGrid> with_forecast;

    if (fs::exists(tables / "table_no_forecast_eer.csv"))
        no_forecast = eval::parse_grid_csv(tables / "table_no_forecast_eer.csv").grid;
    if (fs::exists(tables / "table_forecast_eer.csv")) {
        with_forecast = eval::parse_grid_csv(tables / "table_forecast_eer.csv").grid;
        if (fs::exists(tables / "table_forecast_mse.csv")) {
            // Merge the forecaster-accuracy table into the same grid.
            const auto mse = eval::parse_grid_csv(tables / "table_forecast_mse.csv").grid;
            for (auto& cell : with_forecast->cells) {
                const auto* m = mse.find(cell.window_size, cell.horizon);
                if (m != nullptr && m->has_mse) {
                    cell.has_mse = true;
                    cell.mean_mse = m->mean_mse;
                }
            }
        }
    }
    if (!no_forecast && !with_forecast)
        throw DataError("report: no grid tables found under " + tables.string() +
                        " (expected table_no_forecast_eer.csv or table_forecast_eer.csv)");

    std::vector<eval::OverlapSeries> overlap_series;
    for (const auto& entry : fs::directory_iterator(tables)) {
        const std::string name = entry.path().filename().string();
        int lw = 0, lf = 0;
        if (std::sscanf(name.c_str(), "overlap_ws%d_h%d.csv", &lw, &lf) == 2) {
            eval::OverlapSeries series;
            series.l_window = lw;
            series.l_forecasting = lf;
            std::ifstream in(entry.path());
            std::string line;
            if (!std::getline(in, line) || line != "overlap,mean_mse")
                throw DataError(name + ": malformed overlap series header");
            int row = 1;
            while (std::getline(in, line)) {
                ++row;
                if (line.empty()) continue;
                const auto cells = data::detail::split_line(line);
                if (cells.size() != 2) throw DataError(name + ": row " + std::to_string(row) + ": expected 2 columns");
                eval::OverlapPoint point;
                point.overlap = static_cast<int>(data::detail::parse_number(cells[0], name, row, "overlap"));
                point.mean_mse = data::detail::parse_number(cells[1], name, row, "mean_mse");
                series.points.push_back(std::move(point));
            }
            overlap_series.push_back(std::move(series));
        }
    }
    std::sort(overlap_series.begin(), overlap_series.end(), [](const auto& a, const auto& b) {
        return std::pair(a.l_window, a.l_forecasting) < std::pair(b.l_window, b.l_forecasting);
    });

    std::optional<eval::LatencyStats> timing;
    if (fs::exists(tables / "timing.json")) {
        std::ifstream in(tables / "timing.json");
        nlohmann::json j;
        try {
            in >> j;
            timing = timing_from_json(j);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("report: malformed timing.json: " + std::string(e.what()));
        }
    }

    eval::ReportInputs inputs;
    if (no_forecast) inputs.no_forecast = &*no_forecast;
    if (with_forecast) inputs.with_forecast = &*with_forecast;
    for (const auto& s : overlap_series) inputs.overlaps.push_back(&s);
    if (timing) inputs.timing = &*timing;
    const auto written = eval::emit_report(cfg.out, inputs);

    OptionMap options{{"tables", cfg.tables}, {"out", cfg.out}};
    write_run_manifest(cfg.out, "report", options, "manifest_report.json");
    append_log(cfg.out, "report tables=" + cfg.tables + " status=ok");
    std::cout << "wrote " << written.size() << " report artifacts under " << cfg.out << "\n";
    return 0;
}

} // namespace

int run(int argc, char** argv) {
    CLI::App app{"forecast-augmented behavioral authentication toolkit"};
    app.set_version_flag("--version", std::string("foreauth ") + kToolVersion);
    app.set_config("--config", "", "flat key=value configuration file; command-line flags override file keys");
    app.allow_config_extras(CLI::config_extras_mode::error);
    bool print_config = false;
    app.add_flag("--print-config", print_config, "print the effective configuration and exit");
    app.require_subcommand(0, 1);

    SynthCmd synth;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic session corpus");
    synth_cmd->add_option("--users", synth.users, "number of synthetic users")->check(CLI::Range(2, 10000))
        ->capture_default_str();
    synth_cmd->add_option("--sessions", synth.sessions, "sessions per user per day")->check(CLI::PositiveNumber)
        ->capture_default_str();
    synth_cmd->add_option("--seed", synth.seed, "master seed")->capture_default_str();
    synth_cmd->add_option("--out", synth.out, "output directory")->envname("FOREAUTH_OUT_DIR")->required();

    ValidateCmd validate;
    auto* validate_cmd = app.add_subcommand("validate-data", "check a session corpus against the schema");
    validate_cmd->add_option("--data", validate.data, "corpus root directory")->required();
    validate_cmd->add_option("--out", validate.out, "optional directory for the run manifest")
        ->envname("FOREAUTH_OUT_DIR");

    TrainForecasterCmd trainf;
    auto* trainf_cmd = app.add_subcommand("train-forecaster", "train a per-user motion forecaster");
    trainf_cmd->add_option("--data", trainf.data, "corpus root directory")->required();
    trainf_cmd->add_option("--user", trainf.user, "enrolled user id")->required();
    trainf_cmd->add_option("--out", trainf.out, "output directory")->envname("FOREAUTH_OUT_DIR")->required();
    trainf_cmd->add_option("--window-size", trainf.window_size, "observed window length")->capture_default_str();
    trainf_cmd->add_option("--horizon", trainf.horizon, "forecast horizon")->capture_default_str();
    trainf_cmd->add_option("--overlap", trainf.overlap, "decoder overlap (-1 = default rule)")->capture_default_str();
    trainf_cmd->add_option("--stride", trainf.stride, "window stride")->capture_default_str();
    trainf_cmd->add_option("--validation-fraction", trainf.validation_fraction, "day-1 validation share")
        ->capture_default_str();
    trainf_cmd->add_option("--epochs", trainf.epochs, "training epochs")->capture_default_str();
    trainf_cmd->add_option("--batch-size", trainf.batch_size, "minibatch size")->capture_default_str();
    trainf_cmd->add_option("--lr", trainf.lr, "learning rate")->capture_default_str();
    trainf_cmd->add_option("--stop-mse", trainf.stop_mse, "early-stop position MSE (0 = off)")->capture_default_str();
    trainf_cmd->add_option("--seed", trainf.seed, "training seed")->capture_default_str();
    trainf.dims.add_flags(trainf_cmd);

    TrainAuthCmd traina;
    auto* traina_cmd = app.add_subcommand("train-auth", "train a per-user authentication classifier");
    traina_cmd->add_option("--data", traina.data, "corpus root directory")->required();
    traina_cmd->add_option("--user", traina.user, "enrolled user id")->required();
    traina_cmd->add_option("--out", traina.out, "output directory")->envname("FOREAUTH_OUT_DIR")->required();
    traina_cmd->add_option("--mode", traina.mode, "no_forecast or with_forecast")
        ->check(CLI::IsMember({"no_forecast", "with_forecast"}))->capture_default_str();
    traina_cmd->add_option("--forecaster", traina.forecaster_path,
                           "forecaster checkpoint (with_forecast only; omitted = train inline)");
    traina_cmd->add_option("--window-size", traina.window_size, "observed window length")->capture_default_str();
    traina_cmd->add_option("--horizon", traina.horizon, "forecast horizon (with_forecast)")->capture_default_str();
    traina_cmd->add_option("--overlap", traina.overlap, "decoder overlap (-1 = default rule)")->capture_default_str();
    traina_cmd->add_option("--stride", traina.stride, "window stride")->capture_default_str();
    traina_cmd->add_option("--validation-fraction", traina.validation_fraction, "day-1 validation share")
        ->capture_default_str();
    traina_cmd->add_option("--epochs", traina.epochs, "training epochs")->capture_default_str();
    traina_cmd->add_option("--batch-size", traina.batch_size, "minibatch size")->capture_default_str();
    traina_cmd->add_option("--seed", traina.seed, "training seed")->capture_default_str();
    traina_cmd->add_flag("--joint", traina.joint, "update the forecaster jointly with the classifier");
    traina_cmd->add_option("--lambda-forecast", traina.lambda_forecast, "joint-mode forecast loss weight")
        ->capture_default_str();
    traina_cmd->add_option("--lambda-trigger", traina.lambda_trigger, "joint-mode trigger loss weight")
        ->capture_default_str();
    traina_cmd->add_option("--forecaster-epochs", traina.forecaster_epochs, "inline forecaster epochs")
        ->capture_default_str();
    traina_cmd->add_option("--forecaster-lr", traina.forecaster_lr, "forecaster learning rate")
        ->capture_default_str();
    traina.classifier.add_flags(traina_cmd);
    traina.forecaster_dims.add_flags(traina_cmd);

    EvalCmd evalc;
    auto* eval_cmd = app.add_subcommand("eval", "compute EER metrics from a score file");
    eval_cmd->add_option("--scores", evalc.scores, "score CSV produced by train-auth")->required();
    eval_cmd->add_option("--threshold", evalc.threshold, "also report FAR/FRR at this threshold");
    eval_cmd->add_option("--out", evalc.out, "optional directory for metric artifacts")->envname("FOREAUTH_OUT_DIR");

    SweepCmd sweep;
    auto* sweep_cmd = app.add_subcommand("sweep", "run the window-by-horizon experiment grid");
    sweep_cmd->add_option("--data", sweep.data, "corpus root directory")->required();
    sweep_cmd->add_option("--out", sweep.out, "output directory")->envname("FOREAUTH_OUT_DIR")->required();
    sweep_cmd->add_option("--mode", sweep.mode, "no_forecast or with_forecast")
        ->check(CLI::IsMember({"no_forecast", "with_forecast"}))->capture_default_str();
    sweep_cmd->add_option("--window-sizes", sweep.window_sizes, "window sizes (default: standard grid)")
        ->delimiter(',');
    sweep_cmd->add_option("--horizons", sweep.horizons, "forecast horizons (default: standard grid)")
        ->delimiter(',');
    sweep_cmd->add_option("--master-seed", sweep.master_seed, "sweep master seed")->capture_default_str();
    sweep_cmd->add_option("--stride", sweep.stride, "window stride")->capture_default_str();
    sweep_cmd->add_option("--validation-fraction", sweep.validation_fraction, "day-1 validation share")
        ->capture_default_str();
    sweep_cmd->add_option("--forecaster-epochs", sweep.forecaster_epochs, "forecaster epochs per cell")
        ->capture_default_str();
    sweep_cmd->add_option("--classifier-epochs", sweep.classifier_epochs, "classifier epochs per cell")
        ->capture_default_str();
    sweep_cmd->add_option("--batch-size", sweep.batch_size, "minibatch size")->capture_default_str();
    sweep_cmd->add_option("--forecaster-lr", sweep.forecaster_lr, "forecaster Adam step size")->capture_default_str();
    sweep_cmd->add_option("--workers", sweep.workers, "parallel cell workers (0 = logical cores)")
        ->capture_default_str();
    sweep_cmd->add_flag("--no-cache", sweep.no_cache, "disable the resumable per-cell cache");
    sweep_cmd->add_option("--overlap-window", sweep.overlap_window,
                          "also run the overlap study at this window size (0 = off)")->capture_default_str();
    sweep_cmd->add_option("--overlap-horizon", sweep.overlap_horizon, "overlap-study horizon")->capture_default_str();
    sweep_cmd->add_option("--overlaps", sweep.overlaps, "overlap values (default: full admissible grid)")
        ->delimiter(',');
    sweep.classifier.add_flags(sweep_cmd);
    sweep.forecaster_dims.add_flags(sweep_cmd);

    BenchCmd bench;
    auto* bench_cmd = app.add_subcommand("bench", "measure per-window inference latency");
    bench_cmd->add_option("--out", bench.out, "optional directory for timing artifacts")->envname("FOREAUTH_OUT_DIR");
    bench_cmd->add_option("--mode", bench.mode, "no_forecast or with_forecast")
        ->check(CLI::IsMember({"no_forecast", "with_forecast"}))->capture_default_str();
    bench_cmd->add_option("--window-size", bench.window_size, "observed window length")->capture_default_str();
    bench_cmd->add_option("--horizon", bench.horizon, "forecast horizon (with_forecast)")->capture_default_str();
    bench_cmd->add_option("--reps", bench.repetitions, "timed repetitions (>= 100)")->capture_default_str();
    bench_cmd->add_option("--seed", bench.seed, "model/window seed")->capture_default_str();
    bench.classifier.add_flags(bench_cmd);
    bench.forecaster_dims.add_flags(bench_cmd);

    ReportCmd report;
    auto* report_cmd = app.add_subcommand("report", "regenerate report artifacts from sweep tables");
    report_cmd->add_option("--tables", report.tables, "directory holding sweep table CSVs")->required();
    report_cmd->add_option("--out", report.out, "output directory")->envname("FOREAUTH_OUT_DIR")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ConfigError& e) {
        // Bad config file contents (unknown key, unreadable value).
        std::cerr << "foreauth: " << e.what() << "\n";
        return 2;
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (print_config) {
            std::cout << app.config_to_str(true, true);
            return 0;
        }
        if (synth_cmd->parsed()) return run_synth(synth);
        if (validate_cmd->parsed()) return run_validate(validate);
        if (trainf_cmd->parsed()) return run_train_forecaster(trainf);
        if (traina_cmd->parsed()) return run_train_auth(traina);
        if (eval_cmd->parsed()) return run_eval(evalc);
        if (sweep_cmd->parsed()) return run_sweep_cmd(sweep);
        if (bench_cmd->parsed()) return run_bench(bench);
        if (report_cmd->parsed()) return run_report(report);
        std::cerr << app.help();
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "foreauth: configuration error: " << e.what() << "\n";
        return 2;
    } catch (const ShapeError& e) {
        std::cerr << "foreauth: configuration error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "foreauth: data error: " << e.what() << "\n";
        return 3;
    } catch (const EvalError& e) {
        std::cerr << "foreauth: data error: " << e.what() << "\n";
        return 3;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "foreauth: data error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "foreauth: numeric error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "foreauth: runtime error: " << e.what() << "\n";
        return 4;
    }
}

} // namespace foreauth::cli
