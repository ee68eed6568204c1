#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "foreauth/common/error.hpp"
#include "foreauth/data/synthetic.hpp"
#include "foreauth/data/windows.hpp"
#include "foreauth/forecast/model.hpp"
#include "foreauth/forecast/spec.hpp"
#include "foreauth/forecast/train.hpp"

using namespace foreauth;
using namespace foreauth::forecast;

namespace {

nn::ModelConfig tiny_config(int d_model = 32) {
    nn::ModelConfig c;
    c.d_model = d_model;
    c.n_head = 4;
    c.d_q = c.d_k = c.d_v = d_model / 4;
    c.d_hidden = d_model * 2;
    c.n_encoder_layers = 1;
    c.n_decoder_layers = 1;
    return c;
}

data::Session throw_session(std::uint64_t seed = 3) {
    data::SyntheticUserParams p;
    p.rng_seed = seed;
    return data::generate_session(p, "user00", 1, 0);
}

data::LabeledWindow window_with_tail(const data::Session& s, int start, int l_window, int tail) {
    data::LabeledWindow w;
    w.values = s.samples.slice_rows(start, l_window);
    w.label = 1;
    w.source_user = s.user_id;
    w.source_day = s.day;
    w.source_session = s.session_index;
    w.start_timestamp = start;
    if (start + l_window + tail <= s.samples.rows) w.continuation = s.samples.slice_rows(start + l_window, tail);
    return w;
}

} // namespace

TEST_CASE("forecast spec invariants") {
    const auto spec = make_spec(45, 30);
    CHECK(spec.l_initial == 25);
    CHECK(spec.l_overlap == 20);
    CHECK(spec.decoder_length() == 50);
    CHECK(spec.combined_length() == 75);

    CHECK_THROWS_AS(make_spec(45, 60), ConfigError);  // 45 + 60 > 95
    CHECK_THROWS_AS(make_spec(8, 10), ConfigError);   // window too short for any overlap
    CHECK_THROWS_AS(make_spec(45, 30, 3), ConfigError);   // overlap below 5
    CHECK_THROWS_AS(make_spec(45, 30, 41), ConfigError);  // overlap above l_window - 5
    CHECK_THROWS_AS(make_spec(45, -1), ConfigError);

    ForecastSpec bad = make_spec(45, 30);
    bad.l_initial = 20; // breaks l_initial + l_overlap = l_window
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    ForecastSpec disabled = make_spec(45, 30);
    disabled.l_forecasting = 0;
    disabled.validate(); // horizon 0 marks forecasting disabled
}

TEST_CASE("default overlap is the lower median of the 5-step grid") {
    for (int l_window : {10, 15, 25, 45, 60, 85, 95}) {
        std::vector<int> grid;
        for (int v = 5; v <= l_window - 5; v += 5) grid.push_back(v);
        const int lower_median = grid[(grid.size() - 1) / 2];
        CHECK(default_overlap(l_window) == lower_median);
    }
    CHECK(default_overlap(25) == 10);
    CHECK(default_overlap(45) == 20);
}

TEST_CASE("decoder input copies the overlap tail and zero-fills the horizon") {
    const auto session = throw_session();
    const auto spec = make_spec(45, 30, 15); // l_initial = 30
    const auto window = session.samples.slice_rows(0, 45);
    const auto dec = build_decoder_input(window, spec);
    REQUIRE(dec.rows == 45);
    REQUIRE(dec.cols == data::kChannels);
    for (int r = 0; r < 15; ++r)
        for (int c = 0; c < dec.cols; ++c) CHECK(dec.at(r, c) == window.at(30 + r, c));
    for (int r = 15; r < 45; ++r)
        for (int c = 0; c < dec.cols; ++c) CHECK(dec.at(r, c) == 0.0);

    const auto boundary = make_spec(25, 10, 20); // l_overlap = l_window - 5
    const auto dec2 = build_decoder_input(session.samples.slice_rows(0, 25), boundary);
    CHECK(dec2.rows == 30);
    for (int r = 0; r < 20; ++r) CHECK(dec2.at(r, 0) == session.samples.at(5 + r, 0));

    CHECK_THROWS_AS(build_decoder_input(session.samples.slice_rows(0, 44), spec), ConfigError);
}

TEST_CASE("forecast emits one decoder pass with the contracted shape") {
    const auto session = throw_session();
    for (const auto [lw, lf] : {std::pair{25, 10}, std::pair{45, 30}, std::pair{85, 10}, std::pair{25, 70}}) {
        ForecasterModel model(tiny_config(16), make_spec(lw, lf), 42);
        const auto window = session.samples.slice_rows(0, lw);
        const long before = model.decoder_passes();
        const auto out = model.forecast(window, /*allow_untrained=*/true);
        CHECK(model.decoder_passes() == before + 1);
        CHECK(model.encoder_passes() == before + 1);
        CHECK(out.positions.shape() == nn::Shape{lf, 3});
        CHECK(out.trigger.shape() == nn::Shape{lf, 1});
        const auto block = forecast_block(out);
        CHECK(block.rows == lf);
        CHECK(block.cols == 4);
        for (double v : block.values) CHECK(std::isfinite(v));
    }
}

TEST_CASE("forecast is deterministic and keeps the trigger strictly inside (0,1)") {
    const auto session = throw_session();
    ForecasterModel model(tiny_config(), make_spec(45, 30), 7);
    const auto window = session.samples.slice_rows(10, 45);
    const auto a = model.forecast(window, true);
    const auto b = model.forecast(window, true);
    CHECK(a.positions.values() == b.positions.values());
    CHECK(a.trigger.values() == b.trigger.values());
    for (float t : a.trigger.values()) {
        CHECK(t > 0.0f);
        CHECK(t < 1.0f);
    }
}

TEST_CASE("untrained forecast requires the explicit override") {
    ForecasterModel model(tiny_config(16), make_spec(25, 10), 1);
    const auto window = throw_session().samples.slice_rows(0, 25);
    CHECK_THROWS_AS(model.forecast(window), ConfigError);
    model.mark_trained();
    CHECK(model.forecast(window).positions.dim(0) == 10);
}

TEST_CASE("model rejects mismatched windows and degenerate specs") {
    ForecasterModel model(tiny_config(16), make_spec(45, 30), 1);
    const auto session = throw_session();
    CHECK_THROWS_AS(model.forecast(session.samples.slice_rows(0, 44), true), ShapeError);
    auto zero_horizon = make_spec(45, 30);
    zero_horizon.l_forecasting = 0;
    CHECK_THROWS_AS(ForecasterModel(tiny_config(16), zero_horizon, 1), ConfigError);
}

TEST_CASE("batched forecasts agree with single-window forecasts") {
    const auto session = throw_session();
    ForecasterModel model(tiny_config(), make_spec(45, 30), 5);
    const auto w1 = session.samples.slice_rows(0, 45);
    const auto w2 = session.samples.slice_rows(30, 45);
    const auto blocks = model.forecast_blocks({&w1, &w2}, 2, true);
    REQUIRE(blocks.size() == 2);
    const auto s1 = forecast_block(model.forecast(w1, true));
    const auto s2 = forecast_block(model.forecast(w2, true));
    for (std::size_t i = 0; i < s1.values.size(); ++i) {
        CHECK(blocks[0].values[i] == doctest::Approx(s1.values[i]).epsilon(1e-4));
        CHECK(blocks[1].values[i] == doctest::Approx(s2.values[i]).epsilon(1e-4));
    }
}

TEST_CASE("zero loss weight detaches the matching output head") {
    const auto session = throw_session();
    ForecasterModel model(tiny_config(16), make_spec(25, 10), 9);
    const auto w = window_with_tail(session, 0, 25, 10);
    auto x = tensor_from(w.values);

    std::vector<float> tpos, ttrig;
    for (int r = 0; r < 10; ++r) {
        for (int c = 0; c < 3; ++c) tpos.push_back(static_cast<float>(w.continuation.at(r, c)));
        ttrig.push_back(static_cast<float>(w.continuation.at(r, 3)));
    }
    auto target_pos = nn::Tensor::from_values({10, 3}, std::move(tpos));
    auto target_trig = nn::Tensor::from_values({10, 1}, std::move(ttrig));

    auto grads_after = [&](double lambda_forecast, double lambda_trigger, const std::string& head) {
        for (auto& p : model.parameters()) p.tensor.zero_grad();
        auto out = model.forward(x, true, nullptr);
        nn::Tensor loss = lambda_forecast > 0.0 ? nn::scale(nn::mse_loss(out.positions, target_pos), static_cast<float>(lambda_forecast))
                                                : nn::scale(nn::bce_loss_soft(out.trigger, target_trig), static_cast<float>(lambda_trigger));
        loss.backward();
        double sum = 0.0;
        for (auto& p : model.parameters())
            if (p.name.rfind(head, 0) == 0)
                for (float g : p.tensor.grad()) sum += std::abs(static_cast<double>(g));
        return sum;
    };

    CHECK(grads_after(1.0, 0.0, "trig_head") == 0.0); // lambda_trigger = 0: trigger head untouched
    CHECK(grads_after(1.0, 0.0, "pos_head") > 0.0);
    CHECK(grads_after(0.0, 1.0, "pos_head") == 0.0); // lambda_forecast = 0: position head untouched
    CHECK(grads_after(0.0, 1.0, "trig_head") > 0.0);
}

TEST_CASE("position mse helper matches hand-computed cases") {
    const auto session = throw_session();
    auto w = window_with_tail(session, 0, 45, 30);
    REQUIRE(w.has_continuation());

    // A block copied from the ground truth scores zero.
    std::vector<data::TimeMatrix> perfect{w.continuation};
    CHECK(mean_position_mse(perfect, {&w}) == 0.0);

    // A zero block scores the mean squared target magnitude.
    std::vector<data::TimeMatrix> zero{data::TimeMatrix(30, 4)};
    double expect = 0.0;
    for (int r = 0; r < 30; ++r)
        for (int c = 0; c < 3; ++c) expect += w.continuation.at(r, c) * w.continuation.at(r, c);
    expect /= 30.0 * 3.0;
    CHECK(mean_position_mse(zero, {&w}) == doctest::Approx(expect).epsilon(1e-12));

    CHECK_THROWS_AS(mean_position_mse({}, {}), EvalError);
}

TEST_CASE("persistence baseline repeats the last observed row") {
    data::Session s = throw_session();
    auto w = window_with_tail(s, 0, 45, 10);
    double expect = 0.0;
    for (int r = 0; r < 10; ++r)
        for (int c = 0; c < 3; ++c) {
            const double d = w.values.at(44, c) - w.continuation.at(r, c);
            expect += d * d;
        }
    expect /= 30.0;
    CHECK(persistence_baseline_mse({&w}, 10) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("training excludes windows without tail room and counts them") {
    const auto session = throw_session();
    data::DatasetSplit split;
    split.train.push_back(window_with_tail(session, 0, 45, 30));   // eligible
    split.train.push_back(window_with_tail(session, 90, 45, 30));  // no tail: 90+45+30 > 135
    auto impostor = window_with_tail(session, 0, 45, 30);
    impostor.label = 0; // ignored entirely by forecaster training
    split.train.push_back(impostor);

    ForecasterModel model(tiny_config(16), make_spec(45, 30), 11);
    ForecastTrainOptions opt;
    opt.epochs = 1;
    opt.batch_size = 8;
    const auto result = train_forecaster(model, split, opt);
    CHECK(result.used_windows == 1);
    CHECK(result.excluded_windows == 1);
    CHECK(result.loss_trace.size() == 1);
    CHECK(std::isfinite(result.loss_trace[0]));
    CHECK(model.trained());

    data::DatasetSplit hopeless;
    hopeless.train.push_back(window_with_tail(session, 90, 45, 30));
    ForecasterModel model2(tiny_config(16), make_spec(45, 30), 11);
    CHECK_THROWS_AS(train_forecaster(model2, hopeless, opt), DataError);
}

TEST_CASE("training options are validated") {
    ForecastTrainOptions opt;
    opt.epochs = 0;
    CHECK_THROWS_AS(opt.validate(), ConfigError);
    opt = {};
    opt.weights.lambda_forecast = 0.0;
    opt.weights.lambda_trigger = 0.0;
    CHECK_THROWS_AS(opt.validate(), ConfigError);
}

TEST_CASE("forecaster memorizes a single window") {
    const auto session = throw_session(17);
    data::DatasetSplit split;
    split.train.push_back(window_with_tail(session, 0, 45, 30));

    ForecasterModel model(tiny_config(32), make_spec(45, 30), 23);
    ForecastTrainOptions opt;
    opt.epochs = 2000;
    opt.batch_size = 1;
    opt.learning_rate = 3e-3;
    opt.seed = 23;
    opt.stop_position_mse = 1e-3;
    const auto result = train_forecaster(model, split, opt);
    CHECK(result.steps <= 2000);
    for (double v : result.loss_trace) CHECK(std::isfinite(v));

    const double mse = evaluate_forecaster_mse(model, split.train, 1);
    CHECK(mse < 1e-3);
    CHECK(result.loss_trace.back() < result.loss_trace.front());
}

TEST_CASE("trained forecaster beats the zero-velocity baseline on held-out windows") {
    auto params = data::random_user_params(2, 31);
    const auto corpus = data::generate_synthetic_dataset(params, 4);
    const auto split = data::build_split(corpus, data::WindowSpec{45, 5}, "user00", 0.2, 31, 30);

    ForecasterModel model(tiny_config(32), make_spec(45, 30), 31);
    ForecastTrainOptions opt;
    opt.epochs = 40;
    opt.learning_rate = 1e-3;
    opt.seed = 31;
    const auto result = train_forecaster(model, split, opt);
    CHECK(result.used_windows > 0);

    std::vector<const data::LabeledWindow*> val_windows;
    for (const auto& w : split.validation)
        if (w.label == 1 && w.continuation.rows >= 30) val_windows.push_back(&w);
    REQUIRE(!val_windows.empty());

    const double model_mse = evaluate_forecaster_mse(model, split.validation);
    const double baseline = persistence_baseline_mse(val_windows, 30);
    CHECK(model_mse < baseline);
    CHECK(std::isfinite(model_mse));
}

TEST_CASE("evaluation requires tail room") {
    const auto session = throw_session();
    ForecasterModel model(tiny_config(16), make_spec(45, 30), 3);
    std::vector<data::LabeledWindow> windows{window_with_tail(session, 90, 45, 30)};
    CHECK_THROWS_AS(evaluate_forecaster_mse(model, windows), EvalError);
}
