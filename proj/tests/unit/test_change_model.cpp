#include "chronoscope/audio.hpp"
#include "chronoscope/change_model.hpp"
#include "chronoscope/error.hpp"
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

// The detector's public entry point is visual only.
template <typename T>
concept DetectableFrom = requires(const DetectorModel& m, const T& x) { detect(m, x); };

static_assert(DetectableFrom<FrameSequence>);
static_assert(!DetectableFrom<Clip>);
static_assert(!DetectableFrom<AudioTrack>);

std::vector<DetectorSample> separable(Rng& rng, std::size_t n, std::size_t length) {
    std::vector<DetectorSample> out;
    for (std::size_t i = 0; i < n; ++i) {
        const int y = static_cast<int>(i % 2);
        auto v = random_vector(rng, length, -1.0, 1.0);
        v[0] = (y ? 1.0 : -1.0) * rng.uniform(0.5, 1.5);
        out.push_back({{v, ""}, y});
    }
    return out;
}

TrainConfig small_config() {
    TrainConfig c;
    c.epochs = 40;
    c.batch_size = 10;
    c.hidden = {8};
    c.seed = 5;
    return c;
}

struct ClipSet {
    std::vector<FrameSequence> videos;
    std::vector<SpeedProfile> profiles;

    std::vector<ProtocolClip> protocol() const {
        std::vector<ProtocolClip> out;
        for (std::size_t i = 0; i < videos.size(); ++i) out.push_back({&videos[i], profiles[i]});
        return out;
    }
};

// n clips of 4 s, every other one with a change at a random time.
ClipSet clip_set(std::size_t n, std::uint64_t seed) {
    ClipSet s;
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        const double a = rng.log_uniform(0.05, 0.3);
        SpeedProfile p = SpeedProfile::constant(a, 4.0);
        if (i % 2 == 0) {
            const double t = rng.uniform(1.0, 3.0);
            p = SpeedProfile({{0.0, t, a}, {t, 4.0, a * 3.0}});
        }
        const SceneSpec scene{SceneKind::oscillator, nominal_rate(SceneKind::oscillator, 16, 16), 16, 16, 4.0,
                              rng.next_u64()};
        s.videos.push_back(render_clip(scene, {}, p, 30.0, 8000.0).video);
        s.profiles.push_back(p);
    }
    return s;
}

}  // namespace

TEST_CASE("contrast features follow the thirds of the motion profile") {
    // per-step increments: 0.01 for 10 pairs, 0.02 for 10 pairs, 0.04 for 10 pairs
    std::vector<double> level{0.0};
    for (int i = 0; i < 30; ++i) level.push_back(level.back() + (i < 10 ? 0.01 : i < 20 ? 0.02 : 0.04));
    const auto v = constant_frames(31, [&](std::size_t i) { return level[i]; });
    const FeatureConfig fc;
    const FeatureVector f = detector_features(v, fc);
    REQUIRE(f.values.size() == fc.length() + kContrastFeatures);
    const std::size_t n = fc.length();
    CHECK(f.values[n] == doctest::Approx(std::log(4.0)).epsilon(1e-9));
    CHECK(f.values[n + 1] == doctest::Approx(std::log(2.0)).epsilon(1e-9));
    CHECK(f.values[n + 2] == doctest::Approx(std::log(2.0)).epsilon(1e-9));
    const FeatureVector base = extract_features(v, fc);
    CHECK(std::equal(base.values.begin(), base.values.end(), f.values.begin()));

    const auto still = constant_frames(20, [](std::size_t) { return 0.5; });
    const FeatureVector z = detector_features(still, fc);
    CHECK(std::all_of(z.values.begin(), z.values.end(), [](double x) { return x == 0.0; }));
}

TEST_CASE("property: detector features ignore a brightness offset") {
    Rng rng(1);
    for (int trial = 0; trial < 10; ++trial) {
        const double offset = rng.uniform(0.0, 0.5);
        std::vector<Image> base, shifted;
        for (int i = 0; i < 20; ++i) {
            Image img = random_vector(rng, 25, 0.0, 0.5);
            base.push_back(img);
            for (double& x : img) x += offset;
            shifted.push_back(img);
        }
        const auto a = detector_features(FrameSequence(base, 5, 5, 1, 30.0), {}).values;
        const auto b = detector_features(FrameSequence(shifted, 5, 5, 1, 30.0), {}).values;
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-9));
    }
}

TEST_CASE("binary cross entropy") {
    CHECK(bce_loss(0.0, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(bce_loss(0.0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(sigmoid(0.0) == 0.5);
    // stable far in the tails
    CHECK(bce_loss(800.0, 1) == doctest::Approx(0.0));
    CHECK(bce_loss(-800.0, 1) == doctest::Approx(800.0));
    CHECK(std::isfinite(bce_loss(-800.0, 0)));
    for (double z : {-3.0, -0.5, 0.2, 4.0}) {
        const double p = 1.0 / (1.0 + std::exp(-z));
        CHECK(bce_loss(z, 1) == doctest::Approx(-std::log(p)).epsilon(1e-12));
        CHECK(bce_loss(z, 0) == doctest::Approx(-std::log(1.0 - p)).epsilon(1e-12));
    }
}

TEST_CASE("property: BCE gradient matches central differences") {
    Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t in = 1 + rng.below(6);
        const Mlp net = random_net(rng, in);
        std::vector<BceTerm> terms;
        const std::size_t n = 1 + rng.below(5);
        for (std::size_t i = 0; i < n; ++i) terms.push_back({random_vector(rng, in, -1.0, 1.0), int(rng.below(2))});
        std::vector<double> grad;
        const double loss = bce_batch_gradient(net, terms, grad);
        CHECK(loss == bce_batch_loss(net, terms));
        const GradCheck g = check_gradient(net, [&](const Mlp& m) { return bce_batch_loss(m, terms); }, grad);
        INFO("param ", g.worst_index, " analytic ", g.worst_analytic, " numeric ", g.worst_numeric);
        CHECK(g.max_rel_error < 1e-4);
    }
    const Mlp net({2, 1}, 0);
    CHECK(kind_of([&] { bce_batch_loss(net, {{{0.0, 0.0}, 2}}); }) == ErrorKind::label);
}

TEST_CASE("detector learns a separable toy set") {
    Rng rng(3);
    const FeatureConfig fc;
    const auto samples = separable(rng, 100, fc.length() + kContrastFeatures);
    const DetectorTrainResult r = train_detector(samples, small_config(), fc);
    CHECK(r.train_accuracy == 1.0);
    std::vector<BceTerm> terms;
    for (const auto& s : samples) terms.push_back({s.features.values, s.label});
    CHECK(bce_batch_loss(r.model.net, terms) < 0.05);
    CHECK(r.model.metadata.at("kind") == "detector");
}

TEST_CASE("detector training rejects bad data") {
    Rng rng(4);
    const FeatureConfig fc;
    auto samples = separable(rng, 20, fc.length() + kContrastFeatures);
    auto single = samples;
    for (auto& s : single) s.label = 1;
    CHECK(kind_of([&] { train_detector(single, small_config(), fc); }) == ErrorKind::degenerate_data);
    CHECK(kind_of([&] { train_detector({}, small_config(), fc); }) == ErrorKind::degenerate_data);
    auto bad = samples;
    bad[0].label = 3;
    CHECK(kind_of([&] { train_detector(bad, small_config(), fc); }) == ErrorKind::label);
    bad = samples;
    bad[1].features.values.pop_back();
    CHECK(kind_of([&] { train_detector(bad, small_config(), fc); }) == ErrorKind::shape);
}

TEST_CASE("an untrained zero detector reports probability one half") {
    DetectorModel m = make_detector({}, {4}, 0);
    m.net.zero();
    const auto v = constant_frames(30, [](std::size_t i) { return 0.01 * static_cast<double>(i); });
    const Detection d = detect(m, v);
    CHECK(d.probability == 0.5);
    CHECK_FALSE(d.positive);
    CHECK(kind_of([&] { detect(m, v.slice(0, 3)); }) == ErrorKind::insufficient_length);
}

TEST_CASE("balanced subset") {
    const std::vector<int> labels{1, 0, 0, 0, 1, 0, 0};
    const auto idx = balanced_subset(labels, 3);
    CHECK(idx.size() == 4);
    CHECK(std::is_sorted(idx.begin(), idx.end()));
    std::size_t pos = 0;
    for (std::size_t i : idx) pos += static_cast<std::size_t>(labels[i]);
    CHECK(pos == 2);
    CHECK(balanced_subset(labels, 3) == idx);
    CHECK(balanced_subset({1, 1}, 0).empty());
}

TEST_CASE("middle third labels") {
    const SpeedProfile p({{0.0, 3.0, 0.2}, {3.0, 6.0, 0.5}});
    CHECK(middle_third_label(p, {0, 60, 2.0, 3.0}) == 1);  // middle third [3, 4)
    CHECK(middle_third_label(p, {0, 60, 2.5, 3.0}) == 0);  // change in the first third
    CHECK(middle_third_label(p, {0, 60, 0.9, 3.0}) == 0);  // change in the last third
    CHECK(middle_third_label(p, {0, 60, 1.5, 2.25}) == 1);  // 3.0 closes the middle third, which is closed
    CHECK(middle_third_label(p, {0, 60, 0.0, 2.0}) == 0);
    CHECK(middle_third_label(SpeedProfile::constant(0.3, 6.0), {0, 60, 2.0, 3.0}) == 0);
}

TEST_CASE("protocol with oracle and trivial classifiers") {
    const ClipSet set = clip_set(10, 7);
    const auto clips = set.protocol();
    ProtocolOptions opt;
    opt.stride_s = 0.25;
    opt.seed = 2;
    const auto windows = protocol_windows(clips, 2.0, opt);
    REQUIRE_FALSE(windows.empty());
    std::size_t pos = 0;
    for (const auto& w : windows) pos += static_cast<std::size_t>(w.label);
    CHECK(2 * pos == windows.size());

    std::size_t cursor = 0;
    const ProtocolReport oracle =
        evaluate_protocol(clips, 2.0, opt, [&](const FrameSequence&) { return windows[cursor++].label; });
    CHECK(oracle.scores.accuracy == 1.0);
    CHECK(oracle.n_windows == windows.size());
    CHECK(oracle.n_positive == oracle.n_negative);

    const ProtocolReport never = evaluate_protocol(clips, 2.0, opt, [](const FrameSequence&) { return 0; });
    CHECK(never.scores.accuracy == 0.5);

    opt.balance = false;
    CHECK(protocol_windows(clips, 2.0, opt).size() >= windows.size());
    CHECK(to_json(oracle).at("n_windows") == windows.size());

    const std::vector<ProtocolClip> none;
    CHECK(kind_of([&] { evaluate_protocol(none, 2.0, {}, [](const FrameSequence&) { return 0; }); }) ==
          ErrorKind::empty_set);
}

TEST_CASE("detector container round trip") {
    DetectorModel m = make_detector({}, {6}, 3);
    m.window_s = 1.5;
    m.metadata = {{"kind", "detector"}};
    const DetectorModel back = decode_detector(encode_detector(m));
    CHECK(back.net == m.net);
    CHECK(back.features == m.features);
    CHECK(back.window_s == 1.5);
    CHECK(back.metadata == m.metadata);
    const auto path = scratch_dir("change_model") / "d.chdm";
    save_detector(m, path);
    CHECK(load_detector(path).net == m.net);
    CHECK(kind_of([&] { decode_detector(encode_estimator(make_estimator({}, {6}, 3))); }) == ErrorKind::format);
}
