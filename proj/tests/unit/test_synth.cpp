#include "chronoscope/audio.hpp"
#include "chronoscope/error.hpp"
#include "chronoscope/media_io.hpp"
#include "chronoscope/synth.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace chronoscope;
using namespace testing_support;

namespace {

DatasetSpec tiny(std::size_t n) {
    DatasetSpec s;
    s.n_clips = n;
    s.duration_s = 0.3;
    s.width = 16;
    s.height = 16;
    s.sample_rate = 8000.0;
    return s;
}

// Centroid of the foreground excess over the background level.
std::pair<double, double> centroid(const Image& img, int w, int h) {
    double sx = 0.0, sy = 0.0, sw = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double v = std::max(0.0, img[static_cast<std::size_t>(y * w + x)] - 0.15);
            sx += v * (x + 0.5);
            sy += v * (y + 0.5);
            sw += v;
        }
    }
    return {sx / sw, sy / sw};
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

}  // namespace

TEST_CASE("single-speed dataset stays inside the range") {
    const DatasetSpec s = tiny(100);
    for (std::size_t i = 0; i < s.n_clips; ++i) {
        const GeneratedClip g = generate_clip(s, i);
        REQUIRE(g.truth.profile.segments().size() == 1);
        const double v = g.truth.profile.segments()[0].speed;
        CHECK(v >= 0.01);
        CHECK(v <= 1.0);
        CHECK(g.clip.true_speed == v);
    }
}

TEST_CASE("change fraction one gives one change point per clip") {
    DatasetSpec s = tiny(40);
    s.change_fraction = 1.0;
    for (std::size_t i = 0; i < s.n_clips; ++i) {
        const GeneratedClip g = generate_clip(s, i);
        REQUIRE(g.truth.profile.change_points().size() == 1);
        const auto& segs = g.truth.profile.segments();
        const double ratio = std::max(segs[0].speed, segs[1].speed) / std::min(segs[0].speed, segs[1].speed);
        CHECK(ratio >= 1.3 - 1e-9);
        CHECK(segs[0].speed >= 0.01 - 1e-12);
        CHECK(segs[1].speed <= 1.0 + 1e-12);
        CHECK_FALSE(g.clip.true_speed.has_value());
    }
}

TEST_CASE("change fraction is honored exactly") {
    DatasetSpec s = tiny(200);
    s.change_fraction = 0.5;
    std::size_t count = 0;
    for (std::size_t i = 0; i < s.n_clips; ++i) count += has_change(s, i) ? 1 : 0;
    CHECK(count == 100);
}

TEST_CASE("degenerate speed range") {
    DatasetSpec s = tiny(10);
    s.speed_lo = s.speed_hi = 1.0;
    for (std::size_t i = 0; i < s.n_clips; ++i) {
        CHECK(generate_clip(s, i).truth.profile.segments()[0].speed == 1.0);
    }
    s.change_fraction = 1.0;
    CHECK_THROWS_AS(generate_clip(s, 0), Error);
}

TEST_CASE("bad specs are rejected") {
    DatasetSpec s = tiny(1);
    s.speed_lo = 0.0;
    CHECK_THROWS_AS(generate_clip(s, 0), Error);
    s = tiny(1);
    s.speed_lo = 0.5;
    s.speed_hi = 0.1;
    CHECK_THROWS_AS(generate_clip(s, 0), Error);
    s = tiny(0);
    CHECK_THROWS_AS(make_dataset(s, scratch_dir("synth_zero")), Error);
}

TEST_CASE("property: log speeds are uniform (KS < 0.05)") {
    DatasetSpec s = tiny(1500);
    s.duration_s = 0.1;
    std::vector<double> u;
    for (std::size_t i = 0; i < s.n_clips; ++i) {
        const double v = generate_clip(s, i).truth.profile.segments()[0].speed;
        u.push_back((std::log(v) - std::log(0.01)) / (std::log(1.0) - std::log(0.01)));
    }
    std::sort(u.begin(), u.end());
    double d = 0.0;
    const auto n = static_cast<double>(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
        d = std::max({d, std::abs((i + 1) / n - u[i]), std::abs(u[i] - i / n)});
    }
    CHECK(d < 0.05);
}

TEST_CASE("property: object displacement is proportional to speed") {
    Rng rng(17);
    for (int trial = 0; trial < 12; ++trial) {
        const double speed = rng.uniform(0.45, 1.0);
        const double rate = nominal_rate(SceneKind::bouncing_ball, 64, 64);
        const SceneSpec scene{SceneKind::bouncing_ball, rate, 64, 64, 1.0, rng.next_u64()};
        const Clip c = render_clip(scene, {}, SpeedProfile::constant(speed, 1.0), 30.0, 8000.0);
        std::vector<double> steps;
        for (std::size_t i = 0; i + 1 < c.video.size(); ++i) {
            const auto [x0, y0] = centroid(c.video.frame(i), 64, 64);
            const auto [x1, y1] = centroid(c.video.frame(i + 1), 64, 64);
            steps.push_back(std::hypot(x1 - x0, y1 - y0));
        }
        const double expected = rate * speed / 30.0;
        REQUIRE(expected >= 0.5);
        // median skips the frames where the ball meets a wall
        CHECK(std::abs(median(steps) - expected) / expected < 0.05);
    }
}

TEST_CASE("property: tone frequency follows the segment speed") {
    Rng rng(23);
    const double sr = 16000.0;
    for (int trial = 0; trial < 10; ++trial) {
        const double base = rng.uniform(300.0, 1200.0);
        const double s1 = rng.uniform(0.3, 1.0);
        const double s2 = s1 * rng.uniform(1.3, 3.0);
        const SpeedProfile p({{0.0, 1.0, s1}, {1.0, 2.0, s2}});
        const SceneSpec scene{SceneKind::oscillator, 1.0, 16, 16, 2.0, rng.next_u64()};
        const Clip c = render_clip(scene, {base, 0.5}, p, 30.0, sr);
        const Spectrogram spec = stft(*c.audio, 2048, 512);
        const PitchTrack t = track_pitch(spec, 50.0, 4000.0);
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double time = t.frame_time(i);
            // skip frames whose window straddles the boundary or the filter reach
            if (std::abs(time - 1.0) < spec.window_s || time < 0.3 || time > 1.7) continue;
            const double expected = base * (time < 1.0 ? s1 : s2);
            CHECK(std::abs(std::exp(t.log_hz[i]) - expected) <= spec.bin_hz);
        }
    }
}

TEST_CASE("rendering is deterministic and phase continuous") {
    const SceneSpec scene{SceneKind::oscillator, 1.0, 16, 16, 1.0, 99};
    const SpeedProfile p({{0.0, 0.5, 0.5}, {0.5, 1.0, 1.0}});
    const Clip a = render_clip(scene, {440.0, 0.5}, p, 30.0, 16000.0);
    const Clip b = render_clip(scene, {440.0, 0.5}, p, 30.0, 16000.0);
    CHECK(a == b);
    const auto& s = a.audio->samples();
    double max_jump = 0.0;
    for (std::size_t i = 1; i < s.size(); ++i) max_jump = std::max(max_jump, std::abs(s[i] - s[i - 1]));
    // one sample of a 440 Hz sine at amplitude 0.5 moves at most 2*pi*440/16000*0.5 (plus quantization)
    CHECK(max_jump < 6.283185307179586 * 440.0 / 16000.0 * 0.5 + 1e-3);
}

TEST_CASE("dataset files round trip and are reproducible") {
    DatasetSpec s = tiny(6);
    s.change_fraction = 0.5;
    s.seed = 7;
    const auto a = scratch_dir("synth_a");
    const auto b = scratch_dir("synth_b");
    make_dataset(s, a, 1);
    make_dataset(s, b, 3);
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(a)) {
        CHECK(read_binary_file(e.path()) == read_binary_file(b / e.path().filename()));
        ++files;
    }
    CHECK(files == 2 * 6 + 1);
    const auto sources = list_clip_sources(a);
    REQUIRE(sources.size() == 6);
    for (std::size_t i = 0; i < sources.size(); ++i) {
        const GeneratedClip g = generate_clip(s, i);
        const Clip c = read_clip(sources[i]);
        CHECK(c.video == g.clip.video);
        CHECK(c.audio == g.clip.audio);
        CHECK(read_sidecar(sidecar_path(sources[i])).profile == g.truth.profile);
    }
}

TEST_CASE("sidecar json has the documented fields") {
    const GeneratedClip g = generate_clip(tiny(1), 0);
    const auto j = to_json(g.truth);
    CHECK(j.contains("clip_id"));
    CHECK(j.contains("scene"));
    CHECK(j.contains("seed"));
    REQUIRE(j.at("segments").is_array());
    CHECK(j.at("segments")[0].contains("t_start"));
    CHECK(j.at("segments")[0].contains("t_end"));
    CHECK(j.at("segments")[0].contains("speed"));
    CHECK(sidecar_from_json(j).profile == g.truth.profile);
}
