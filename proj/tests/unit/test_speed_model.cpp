#include "chronoscope/error.hpp"
#include "chronoscope/speed_model.hpp"
#include "chronoscope/synth.hpp"
#include "gradcheck.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace chronoscope;
using namespace testing_support;

namespace {

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::invalid_argument;
}

FeatureVector fv(const EstimatorModel& m, double fill) {
    return {std::vector<double>(m.features.length(), fill), m.features.hash()};
}

EstimatorModel zero_model() {
    EstimatorModel m = make_estimator({}, {8}, 1);
    m.net.zero();
    return m;
}

// Footage of true speed s under an estimator that reports f(current speed).
template <typename F>
struct MockSource {
    double speed;
    F f;
    std::size_t held = 1000;
    std::vector<double> factors;

    double estimate() { return f(speed); }
    double max_factor() const { return static_cast<double>(held - 1) / 15.0; }
    void accelerate(double k) {
        factors.push_back(k);
        speed *= k;
        held = static_cast<std::size_t>(std::floor(static_cast<double>(held - 1) / k)) + 1;
    }
    std::size_t frames() const { return held; }
};

template <typename F>
MockSource<F> mock(double s, F f, std::size_t held = 1000) {
    return MockSource<F>{s, f, held, {}};
}

LossBatch random_batch(Rng& rng, std::size_t inputs) {
    LossBatch b;
    b.lambda_sup = rng.uniform(0.0, 2.0);
    const std::size_t n_ssl = rng.below(4);
    const std::size_t n_sup = rng.below(3) + (n_ssl == 0 ? 1 : 0);
    for (std::size_t i = 0; i < n_ssl; ++i) {
        b.ssl.push_back({random_vector(rng, inputs, -1.0, 1.0), random_vector(rng, inputs, -1.0, 1.0),
                         std::exp(rng.uniform(0.0, std::log(4.0)))});
    }
    for (std::size_t i = 0; i < n_sup; ++i) {
        b.sup.push_back({random_vector(rng, inputs, -1.0, 1.0), rng.log_uniform(0.01, 1.0)});
    }
    return b;
}

std::vector<FrameSequence> oscillator_set(std::size_t n, double duration, std::uint64_t seed) {
    std::vector<FrameSequence> out;
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        const SceneSpec scene{SceneKind::oscillator, nominal_rate(SceneKind::oscillator, 16, 16), 16, 16, duration,
                              rng.next_u64()};
        out.push_back(render_clip(scene, {}, SpeedProfile::constant(rng.log_uniform(0.05, 1.0), duration), 30.0, 8000.0)
                          .video);
    }
    return out;
}

TrainConfig quick_config() {
    TrainConfig c;
    c.epochs = 3;
    c.batch_size = 5;
    c.hidden = {8};
    c.seed = 11;
    return c;
}

}  // namespace

TEST_CASE("forward of a zero network and of a single linear layer") {
    const EstimatorModel z = zero_model();
    CHECK(forward(z, fv(z, 0.3)) == 0.0);
    EstimatorModel lin = make_estimator({}, {}, 0);
    std::vector<double> theta(lin.net.parameter_count(), 0.0);
    theta[0] = 1.0;
    lin.net.set_parameters(theta);
    FeatureVector x = fv(lin, 0.0);
    x.values[0] = 0.7;
    CHECK(forward(lin, x) == 0.7);
}

TEST_CASE("self-supervised loss worked examples") {
    const EstimatorModel z = zero_model();
    CHECK(ssl_loss(z, fv(z, 0.1), fv(z, 0.2), 1.0) == 0.0);
    CHECK(ssl_loss(z, fv(z, 0.1), fv(z, 0.2), 2.0) == doctest::Approx(std::log(2.0) * std::log(2.0)).epsilon(1e-15));
    CHECK(kind_of([&] { ssl_loss(z, fv(z, 0.1), fv(z, 0.2), 0.99); }) == ErrorKind::invalid_factor);
}

TEST_CASE("supervised loss worked examples") {
    const EstimatorModel z = zero_model();
    CHECK(sup_loss(z, fv(z, 0.0), 1.0) == 0.0);
    CHECK(sup_loss(z, fv(z, 0.0), 2.0) == doctest::Approx(std::log(2.0) * std::log(2.0)).epsilon(1e-15));
    CHECK(sup_loss(z, fv(z, 0.0), std::exp(1.0)) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(kind_of([&] { sup_loss(z, fv(z, 0.0), 0.0); }) == ErrorKind::label);
    CHECK(kind_of([&] { sup_loss(z, fv(z, 0.0), -1.0); }) == ErrorKind::label);
}

TEST_CASE("batch loss is the weighted mean of the per-term losses") {
    Rng rng(2);
    EstimatorModel m = make_estimator({}, {4}, 3);
    for (int trial = 0; trial < 20; ++trial) {
        const LossBatch b = random_batch(rng, m.features.length());
        double ssl = 0.0, sup = 0.0;
        for (const auto& t : b.ssl) ssl += ssl_loss(m, {t.orig, ""}, {t.accel, ""}, t.k);
        for (const auto& t : b.sup) sup += sup_loss(m, {t.features, ""}, t.true_speed);
        const double expect = (b.ssl.empty() ? 0.0 : ssl / static_cast<double>(b.ssl.size())) +
                              b.lambda_sup * (b.sup.empty() ? 0.0 : sup / static_cast<double>(b.sup.size()));
        CHECK(batch_loss(m.net, b) == doctest::Approx(expect).epsilon(1e-12));
        std::vector<double> g;
        CHECK(batch_loss_gradient(m.net, b, g) == batch_loss(m.net, b));
    }
}

TEST_CASE("property: batch gradient matches central differences") {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t in = 1 + rng.below(6);
        const Mlp net = random_net(rng, in);
        const LossBatch b = random_batch(rng, in);
        std::vector<double> grad;
        batch_loss_gradient(net, b, grad);
        const GradCheck g = check_gradient(net, [&](const Mlp& m) { return batch_loss(m, b); }, grad);
        INFO("param ", g.worst_index, " analytic ", g.worst_analytic, " numeric ", g.worst_numeric);
        CHECK(g.max_rel_error < 1e-4);
    }
}

TEST_CASE("property: self-supervised gradient alone matches central differences") {
    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t in = 1 + rng.below(6);
        const Mlp net = random_net(rng, in);
        LossBatch b;
        b.ssl.push_back({random_vector(rng, in, -1.0, 1.0), random_vector(rng, in, -1.0, 1.0),
                         1.0 + rng.uniform(0.0, 3.0)});
        std::vector<double> grad;
        batch_loss_gradient(net, b, grad);
        const GradCheck g = check_gradient(net, [&](const Mlp& m) { return batch_loss(m, b); }, grad);
        INFO("param ", g.worst_index, " analytic ", g.worst_analytic, " numeric ", g.worst_numeric);
        CHECK(g.max_rel_error < 1e-4);
    }
}

TEST_CASE("zero loss gives a zero gradient") {
    const EstimatorModel z = zero_model();
    LossBatch b;
    b.ssl.push_back({fv(z, 0.4).values, fv(z, 0.9).values, 1.0});
    b.sup.push_back({fv(z, 0.2).values, 1.0});
    std::vector<double> grad;
    CHECK(batch_loss_gradient(z.net, b, grad) == 0.0);
    CHECK(std::all_of(grad.begin(), grad.end(), [](double g) { return g == 0.0; }));
}

TEST_CASE("single weight supervised gradient is 2 (pred - ln s) x") {
    Mlp net(std::vector<DenseLayer>{{1, 1, {0.5}, {0.1}}});
    const double x = 0.8, s = 0.3;
    LossBatch b;
    b.sup.push_back({{x}, s});
    std::vector<double> grad;
    batch_loss_gradient(net, b, grad);
    const double pred = 0.5 * x + 0.1;
    CHECK(grad[0] == doctest::Approx(2.0 * (pred - std::log(s)) * x).epsilon(1e-14));
    CHECK(grad[1] == doctest::Approx(2.0 * (pred - std::log(s))).epsilon(1e-14));
}

TEST_CASE("property: sampled acceleration factors respect the bounds") {
    Rng rng(5);
    for (KSampler sampler : {KSampler::log_uniform, KSampler::truncated_normal}) {
        TrainConfig c;
        c.k_sampler = sampler;
        for (int trial = 0; trial < 2000; ++trial) {
            const std::size_t n = 16 + rng.below(200);
            const auto k = sample_k(rng, c, n, 16);
            if (n == 16) {
                CHECK_FALSE(k.has_value());
                continue;
            }
            REQUIRE(k.has_value());
            CHECK(*k >= 1.0);
            CHECK(*k <= max_subsample_factor(n, 16));
            if (sampler == KSampler::log_uniform) CHECK(*k <= c.k_max);
            CHECK(subsample(constant_frames(n, [](std::size_t) { return 0.0; }, 1, 1), *k).size() >= 16);
        }
    }
    TrainConfig c;
    CHECK_FALSE(sample_k(rng, c, 10, 16).has_value());
}

TEST_CASE("log-uniform sampler covers [1, k_max] in log space") {
    Rng rng(6);
    TrainConfig c;
    std::vector<double> u;
    for (int i = 0; i < 4000; ++i) u.push_back(std::log(*sample_k(rng, c, 1000, 16)) / std::log(c.k_max));
    std::sort(u.begin(), u.end());
    double d = 0.0;
    const auto n = static_cast<double>(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) d = std::max({d, std::abs((i + 1) / n - u[i]), std::abs(u[i] - i / n)});
    CHECK(d < 0.05);
}

TEST_CASE("train config validation and json") {
    TrainConfig c;
    c.learning_rate = 0.0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = TrainConfig{};
    c.k_max = 1.0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = TrainConfig{};
    c.k_sampler = KSampler::truncated_normal;
    c.hidden = {3, 5};
    const TrainConfig back = train_config_from_json(to_json(c));
    CHECK(back.k_sampler == c.k_sampler);
    CHECK(back.hidden == c.hidden);
    CHECK(k_sampler_from_string("log_uniform") == KSampler::log_uniform);
    CHECK(kind_of([] { k_sampler_from_string("gaussian"); }) == ErrorKind::invalid_argument);
}

TEST_CASE("training rejects empty and unusable data") {
    const auto still = constant_frames(40, [](std::size_t) { return 0.5; });
    TrainData none;
    CHECK(kind_of([&] { train_estimator(none, quick_config()); }) == ErrorKind::empty_set);
    TrainData unl;
    unl.unlabeled.push_back(&still);
    CHECK(kind_of([&] { train_estimator(unl, quick_config()); }) == ErrorKind::empty_set);
    const auto short_clip = constant_frames(16, [](std::size_t) { return 0.5; });
    TrainData too_short;
    too_short.unlabeled.push_back(&short_clip);
    TrainConfig c = quick_config();
    c.lambda_sup = 0.0;
    CHECK(kind_of([&] { train_estimator(too_short, c); }) == ErrorKind::insufficient_length);
    TrainData bad_label;
    bad_label.unlabeled.push_back(&still);
    bad_label.labeled.push_back({&still, 0.0});
    CHECK(kind_of([&] { train_estimator(bad_label, quick_config()); }) == ErrorKind::label);
}

TEST_CASE("motionless footage is flagged as zero-feature batches") {
    std::vector<FrameSequence> clips;
    for (int i = 0; i < 10; ++i) clips.push_back(constant_frames(40, [i](std::size_t) { return 0.1 * i; }));
    TrainData d;
    for (const auto& c : clips) d.unlabeled.push_back(&c);
    TrainConfig c = quick_config();
    c.lambda_sup = 0.0;
    const TrainResult r = train_estimator(d, c);
    REQUIRE_FALSE(r.history.records.empty());
    CHECK(r.history.zero_feature_fraction() >= 0.9);
    CHECK(std::all_of(r.history.records.begin(), r.history.records.end(),
                      [](const LossRecord& rec) { return rec.zero_features; }));
}

TEST_CASE("training is deterministic for a seed and thread count independent") {
    const auto clips = oscillator_set(8, 2.0, 1);
    TrainData d;
    for (std::size_t i = 0; i < clips.size(); ++i) {
        if (i < 2) d.labeled.push_back({&clips[i], 0.5});
        d.unlabeled.push_back(&clips[i]);
    }
    const TrainResult a = train_estimator(d, quick_config(), {}, 1);
    const TrainResult b = train_estimator(d, quick_config(), {}, 2);
    CHECK(encode_estimator(a.model) == encode_estimator(b.model));
    REQUIRE(a.history.records.size() == b.history.records.size());
    for (std::size_t i = 0; i < a.history.records.size(); ++i) {
        CHECK(a.history.records[i].loss == b.history.records[i].loss);
    }
    TrainConfig other = quick_config();
    other.seed = 12;
    CHECK(encode_estimator(train_estimator(d, other).model) != encode_estimator(a.model));
    CHECK(a.model.metadata.at("kind") == "estimator");
    CHECK(a.model.metadata.contains("k_sampler"));
    CHECK(a.history.smoothed(50).size() == a.history.records.size());
}

TEST_CASE("prediction windows") {
    CHECK(prediction_window_starts(16, 16, 8) == std::vector<std::size_t>{0});
    CHECK(prediction_window_starts(20, 16, 1) == std::vector<std::size_t>{2});
    const auto s = prediction_window_starts(100, 16, 8);
    REQUIRE(s.size() == 8);
    CHECK(s.front() == 0);
    CHECK(s.back() == 84);
    CHECK(std::is_sorted(s.begin(), s.end()));
    CHECK(prediction_window_starts(18, 16, 8).size() == 3);
}

TEST_CASE("an unbiased estimator reaches its fixed point in one step") {
    for (double s : {0.01, 0.05, 0.3, 0.9}) {
        auto src = mock(s, [](double v) { return v; });
        const PredictionTrace t = iterate_prediction(src, 3);
        CHECK(t.final_speed == doctest::Approx(s).epsilon(1e-12));
        CHECK(t.steps.front().residual_estimate == doctest::Approx(s).epsilon(1e-12));
        for (std::size_t j = 1; j < t.steps.size(); ++j) {
            CHECK(t.steps[j].residual_estimate == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("square-root bias converges as s^(1 - 2^-n)") {
    for (double s : {0.01, 0.04, 0.2}) {
        for (std::size_t n : {1u, 2u, 3u, 4u}) {
            auto src = mock(s, [](double v) { return std::sqrt(v); }, 100000);
            const PredictionTrace t = iterate_prediction(src, n);
            CHECK(t.steps.size() == n);
            const double expect = std::pow(s, 1.0 - std::pow(0.5, static_cast<double>(n)));
            CHECK(std::abs(t.final_speed - expect) <= 1e-9);
            double product = 1.0;
            for (const auto& step : t.steps) product *= step.residual_estimate;
            CHECK(product == doctest::Approx(t.final_speed).epsilon(1e-12));
        }
        auto src = mock(s, [](double v) { return std::sqrt(v); }, 100000);
        CHECK(std::abs(iterate_prediction(src, 3).final_speed - std::pow(s, 7.0 / 8.0)) <= 1e-9);
    }
}

TEST_CASE("capped acceleration still yields a consistent estimate") {
    // only a 2x budget; the estimator is exact, so the estimate must not drift
    auto src = mock(0.05, [](double v) { return v; }, 31);
    const PredictionTrace t = iterate_prediction(src, 3);
    REQUIRE_FALSE(src.factors.empty());
    CHECK(src.factors.front() == doctest::Approx(2.0));
    CHECK(t.final_speed == doctest::Approx(0.05).epsilon(1e-12));
}

TEST_CASE("one iteration equals the plain forward prediction") {
    const auto clips = oscillator_set(1, 3.0, 2);
    const EstimatorModel m = make_estimator({}, {6}, 4);
    const PredictionTrace t = predict_iterative(m, clips[0], 1);
    REQUIRE(t.steps.size() == 1);
    CHECK(t.final_speed == doctest::Approx(std::exp(predict_log_speed(m, clips[0]))).epsilon(1e-15));
    CHECK(kind_of([&] { predict_iterative(m, clips[0], 0); }) == ErrorKind::invalid_argument);
    CHECK(kind_of([&] { predict_iterative(m, clips[0].slice(0, 10), 3); }) == ErrorKind::insufficient_length);
    const EstimatorModel z = zero_model();
    const PredictionTrace zt = predict_iterative(z, clips[0], 3);
    CHECK(zt.final_speed == 1.0);
    CHECK(zt.steps.size() == 1);
    CHECK(to_json(zt).at("iterations").size() == 1);
}

TEST_CASE("estimator container round trip") {
    EstimatorModel m = make_estimator({}, {5, 3}, 8);
    m.metadata = {{"kind", "estimator"}};
    m.prediction_windows = 4;
    const EstimatorModel back = decode_estimator(encode_estimator(m));
    CHECK(back.net == m.net);
    CHECK(back.features == m.features);
    CHECK(back.prediction_windows == 4);
    CHECK(back.metadata == m.metadata);
    const auto path = scratch_dir("speed_model") / "m.chsm";
    save_estimator(m, path);
    CHECK(load_estimator(path).net == m.net);
    EstimatorModel bad = m;
    bad.features.frames = 12;
    CHECK_THROWS_AS(decode_estimator(encode_estimator(bad)), Error);
    CHECK(kind_of([] { load_estimator("/nonexistent/x.chsm"); }) == ErrorKind::io);
}
