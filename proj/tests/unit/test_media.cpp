#include "chronoscope/error.hpp"
#include "chronoscope/media.hpp"
#include "chronoscope/media_io.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

using namespace chronoscope;
using namespace testing_support;

namespace {

std::vector<std::size_t> tags_of(const FrameSequence& v, std::size_t n) {
    std::vector<std::size_t> out;
    for (const Image& f : v.frames()) {
        out.push_back(static_cast<std::size_t>(std::lround(f[0] * static_cast<double>(n))));
    }
    return out;
}

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::invalid_argument;
}

}  // namespace

TEST_CASE("frame sequence rejects broken invariants") {
    CHECK(kind_of([] { FrameSequence({}, 2, 2, 1, 30.0); }) == ErrorKind::insufficient_length);
    CHECK(kind_of([] { FrameSequence({Image(4, 0.0)}, 2, 2, 4, 30.0); }) == ErrorKind::unsupported_channels);
    CHECK(kind_of([] { FrameSequence({Image(4, 0.0)}, 2, 2, 1, 0.0); }) == ErrorKind::invalid_argument);
    CHECK(kind_of([] { FrameSequence({Image(4, 0.0), Image(3, 0.0)}, 2, 2, 1, 30.0); }) == ErrorKind::shape);
    CHECK(kind_of([] { FrameSequence({Image(4, 1.5)}, 2, 2, 1, 30.0); }) == ErrorKind::invalid_argument);
    CHECK(kind_of([] { AudioTrack({0.0, 2.0}, 16000.0); }) == ErrorKind::invalid_argument);
}

TEST_CASE("speed profile validation and integration") {
    CHECK(kind_of([] { SpeedProfile({}); }) == ErrorKind::profile);
    CHECK(kind_of([] { SpeedProfile({{0.5, 1.0, 1.0}}); }) == ErrorKind::profile);
    CHECK(kind_of([] { SpeedProfile({{0.0, 1.0, 1.0}, {1.5, 2.0, 1.0}}); }) == ErrorKind::profile);
    CHECK(kind_of([] { SpeedProfile({{0.0, 1.0, 0.0}}); }) == ErrorKind::profile);
    const SpeedProfile p({{0.0, 2.0, 0.5}, {2.0, 5.0, 0.1}});
    CHECK(p.content_time(2.0) == doctest::Approx(1.0));
    CHECK(p.content_time(5.0) == doctest::Approx(1.3));
    CHECK(p.speed_at(1.0) == 0.5);
    CHECK(p.speed_at(3.0) == 0.1);
    CHECK(p.change_points() == std::vector<double>{2.0});
}

TEST_CASE("subsample picks round(i*k)") {
    const auto v8 = index_tagged(8);
    CHECK(tags_of(subsample(v8, 2.0), 8) == std::vector<std::size_t>{0, 2, 4, 6});
    const auto v16 = index_tagged(16);
    CHECK(tags_of(subsample(v16, 1.5), 16) ==
          std::vector<std::size_t>{0, 2, 3, 5, 6, 8, 9, 11, 12, 14, 15});
    CHECK(subsample(v16, 1.0) == v16);
    CHECK(subsample(v16, 3.0).fps() == v16.fps());
}

TEST_CASE("subsample errors") {
    const auto v = index_tagged(8);
    CHECK(kind_of([&] { subsample(v, 0.5); }) == ErrorKind::invalid_factor);
    CHECK(kind_of([&] { subsample(v, 8.0); }) == ErrorKind::insufficient_length);
    CHECK(subsample(v, 7.0).size() == 2);
}

TEST_CASE("subsample matches an enumerated oracle on random factors") {
    Rng rng(11);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + rng.below(200);
        const double k = rng.uniform(1.0, std::max(1.0, static_cast<double>(n - 1)));
        std::vector<std::size_t> expect;
        for (std::size_t i = 0; static_cast<double>(i) * k <= static_cast<double>(n - 1) + 1e-9; ++i) {
            expect.push_back(std::min<std::size_t>(n - 1, static_cast<std::size_t>(std::lround(i * k))));
        }
        if (expect.size() < 2) continue;
        CHECK(subsample_indices(n, k) == expect);
    }
}

TEST_CASE("property: integer subsampling composes") {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 10 + rng.below(120);
        const auto a = static_cast<double>(1 + rng.below(4));
        const auto b = static_cast<double>(1 + rng.below(4));
        const auto v = index_tagged(n);
        if (static_cast<double>(n - 1) / (a * b) < 1.0) continue;
        CHECK(subsample(subsample(v, a), b) == subsample(v, a * b));
    }
}

TEST_CASE("property: subsample never invents pixel values") {
    Rng rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        const auto v = random_frames(rng, 20 + rng.below(20), 3, 3);
        std::set<double> seen;
        for (const Image& f : v.frames()) seen.insert(f.begin(), f.end());
        const auto s = subsample(v, rng.uniform(1.0, 5.0));
        for (const Image& f : s.frames()) {
            for (double p : f) CHECK(seen.count(p) == 1);
        }
    }
}

TEST_CASE("max subsample factor keeps enough frames") {
    CHECK(max_subsample_factor(31, 16) == 2.0);
    CHECK(max_subsample_factor(10, 16) == 1.0);
    Rng rng(9);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 16 + rng.below(300);
        CHECK(subsample(index_tagged(n), max_subsample_factor(n, 16)).size() >= 16);
    }
}

TEST_CASE("blur of a constant video is the input frame") {
    const auto v = constant_frames(40, [](std::size_t) { return 0.37; });
    const auto b = synthesize_blur(v, 8, 8);
    CHECK(b.size() == blur_centers(40, 8, 8).size());
    for (const Image& f : b.frames()) {
        CHECK(f == v.frame(0));
    }
}

TEST_CASE("blur of a ramp averages eight frames around center 4") {
    // frame i (0-based) holds (i + 1) / 16, i.e. the values 1..16 over 16
    const auto v = constant_frames(16, [](std::size_t i) { return static_cast<double>(i + 1) / 16.0; });
    const auto centers = blur_centers(16, 8, 8);
    REQUIRE(centers.front() == 4);
    const auto b = synthesize_blur(v, 8, 8);
    CHECK(std::abs(b.frame(0)[0] - 5.5 / 16.0) < 1e-12);
}

TEST_CASE("blur with window one is plain subsampling") {
    Rng rng(4);
    const auto v = random_frames(rng, 30, 3, 2);
    const auto b = synthesize_blur(v, 1, 3);
    const auto centers = blur_centers(30, 1, 3);
    CHECK(b.size() == centers.size());
    for (std::size_t j = 0; j < centers.size(); ++j) {
        CHECK(b.frame(j) == v.frame(centers[j]));
    }
    CHECK(b.fps() == doctest::Approx(10.0));
}

TEST_CASE("blur window too long is an error") {
    const auto v = index_tagged(8);
    CHECK(kind_of([&] { synthesize_blur(v, 9, 1); }) == ErrorKind::insufficient_length);
    CHECK(kind_of([&] { synthesize_blur(v, 0, 1); }) == ErrorKind::invalid_argument);
}

TEST_CASE("property: blur output lies within its contributing frames") {
    Rng rng(21);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t n = 12 + rng.below(40);
        const std::size_t w = 1 + rng.below(10);
        const std::size_t s = 1 + rng.below(8);
        const auto v = random_frames(rng, n, 3, 3);
        const auto centers = blur_centers(n, w, s);
        if (centers.empty()) continue;
        const auto b = synthesize_blur(v, w, s);
        const std::size_t back = (w + 1) / 2 - 1;
        for (std::size_t j = 0; j < centers.size(); ++j) {
            const std::size_t first = centers[j] - back;
            REQUIRE(first + w <= n);
            for (std::size_t p = 0; p < v.pixels_per_frame(); ++p) {
                double lo = 1.0, hi = 0.0, sum = 0.0;
                for (std::size_t f = first; f < first + w; ++f) {
                    lo = std::min(lo, v.frame(f)[p]);
                    hi = std::max(hi, v.frame(f)[p]);
                    sum += v.frame(f)[p];
                }
                CHECK(b.frame(j)[p] >= lo - 1e-15);
                CHECK(b.frame(j)[p] <= hi + 1e-15);
                CHECK(b.frame(j)[p] == doctest::Approx(sum / static_cast<double>(w)).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("blur pair frame counts") {
    const auto v = index_tagged(100);
    const BlurPair p = make_blur_pair(v, 8, 8);
    CHECK(p.input.size() == blur_centers(100, 8, 8).size());
    CHECK(p.target.size() == (p.input.size() - 1) * 8 + 1);
    CHECK(p.input.fps() == doctest::Approx(v.fps() / 8.0));
    CHECK(p.target.fps() == v.fps());
}

TEST_CASE("uniform indices include both ends") {
    CHECK(uniform_indices(60, 16).front() == 0);
    CHECK(uniform_indices(60, 16).back() == 59);
    CHECK(uniform_indices(16, 16) == [] {
        std::vector<std::size_t> v(16);
        for (std::size_t i = 0; i < 16; ++i) v[i] = i;
        return v;
    }());
    CHECK_THROWS_AS(uniform_indices(10, 16), Error);
}

TEST_CASE("window grid and middle third") {
    const auto grid = window_grid(300, 30.0, 2.0, 0.5);
    REQUIRE(!grid.empty());
    CHECK(grid.front().end_frame - grid.front().start_frame == 60);
    CHECK(grid.back().end_frame <= 300);
    const WindowSpan w{0, 90, 3.0, 3.0};
    CHECK(in_middle_third(4.5, w));
    CHECK(in_middle_third(4.0, w));
    CHECK(in_middle_third(5.0, w));
    CHECK_FALSE(in_middle_third(3.9, w));
    CHECK_FALSE(in_middle_third(5.1, w));
}

TEST_CASE("clip container round trip, including audio") {
    Rng rng(8);
    const auto dir = scratch_dir("media_rt");
    for (int channels : {1, 3}) {
        std::vector<double> samples(2669);  // 5 frames at 29.97 fps
        for (double& s : samples) s = rng.uniform(-1.0, 1.0);
        Clip c{random_frames(rng, 5, 7, 3, channels, 29.97), AudioTrack(samples, 16000.0), std::nullopt, "rt"};
        const Clip q = quantize_for_storage(c);
        write_clip(q, dir / "rt.chrn");
        const Clip back = read_clip(dir / "rt.chrn");
        CHECK(back == q);
        // quantizing again changes nothing
        CHECK(quantize_for_storage(back) == back);
    }
}

TEST_CASE("true speed travels through the sidecar") {
    const auto dir = scratch_dir("media_speed");
    Clip c{constant_frames(10, [](std::size_t) { return 0.0; }), std::nullopt, 0.25, "spd"};
    write_clip(c, dir / "spd.chrn");
    CHECK(read_clip(dir / "spd.chrn").true_speed == 0.25);
}

TEST_CASE("minimal clip payload is one pixel") {
    const Clip c{FrameSequence({Image{0.5}}, 1, 1, 1, 30.0), std::nullopt, std::nullopt, "one"};
    const std::string bytes = encode_clip(c);
    // magic 4, version 2, width 2, height 2, channels 1, frames 4, fps 4, audio flag 1
    CHECK(bytes.size() == 20 + 1);
    CHECK(static_cast<unsigned char>(bytes.back()) == 128);
}

TEST_CASE("malformed containers name the problem") {
    const Clip c{constant_frames(3, [](std::size_t) { return 0.2; }), std::nullopt, std::nullopt, "x"};
    std::string bytes = encode_clip(c);

    std::string bad_channels = bytes;
    bad_channels[10] = 4;
    CHECK(kind_of([&] { decode_clip(bad_channels, "x"); }) == ErrorKind::unsupported_channels);

    std::string bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK(kind_of([&] { decode_clip(bad_magic, "x"); }) == ErrorKind::format);

    try {
        decode_clip(bytes.substr(0, bytes.size() - 5), "x");
        FAIL("truncated payload accepted");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::format);
        CHECK(std::string(e.what()).find("truncated") != std::string::npos);
    }
    try {
        decode_clip(bytes.substr(0, 9), "x");
        FAIL("truncated header accepted");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("height") != std::string::npos);
    }
    CHECK(kind_of([&] { decode_clip(bytes + "z", "x"); }) == ErrorKind::format);
}

TEST_CASE("wav round trip") {
    const auto dir = scratch_dir("media_wav");
    Rng rng(12);
    std::vector<double> s(999);
    for (double& v : s) v = quantize_sample(rng.uniform(-1.0, 1.0));
    const AudioTrack a(s, 22050.0);
    write_wav(a, dir / "a.wav");
    CHECK(read_wav(dir / "a.wav") == a);
    std::ofstream(dir / "bad.wav") << "not a wav file at all";
    CHECK(kind_of([&] { read_wav(dir / "bad.wav"); }) == ErrorKind::format);
}

TEST_CASE("png directory round trip") {
    const auto dir = scratch_dir("media_png");
    Rng rng(13);
    for (int channels : {1, 3}) {
        std::vector<Image> frames;
        for (int i = 0; i < 4; ++i) {
            Image img(static_cast<std::size_t>(5 * 4 * channels));
            for (double& v : img) v = quantize_pixel(rng.uniform());
            frames.push_back(img);
        }
        const FrameSequence v(frames, 5, 4, channels, 24.0);
        const auto sub = dir / ("seq" + std::to_string(channels));
        write_png_dir(v, sub);
        const Clip c = read_png_dir(sub);
        CHECK(c.video == v);
        CHECK(read_clip(sub).video == v);
    }
    fs::create_directories(dir / "empty");
    CHECK(kind_of([&] { read_png_dir(dir / "empty"); }) == ErrorKind::format);
}

TEST_CASE("clip validation catches mismatched audio") {
    Clip c{constant_frames(30, [](std::size_t) { return 0.0; }), AudioTrack(std::vector<double>(8000, 0.0), 16000.0),
           std::nullopt, "m"};
    CHECK(kind_of([&] { validate(c); }) == ErrorKind::invalid_argument);
    c.audio = AudioTrack(std::vector<double>(16000, 0.0), 16000.0);
    CHECK_NOTHROW(validate(c));
    c.true_speed = -1.0;
    CHECK(kind_of([&] { validate(c); }) == ErrorKind::label);
}
