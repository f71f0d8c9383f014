#pragma once

#include "chronoscope/media.hpp"
#include "chronoscope/random.hpp"

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

namespace testing_support {

using chronoscope::FrameSequence;
using chronoscope::Image;
using chronoscope::Rng;

// Sequence whose frame i is a constant image of value(i).
template <typename Fn>
FrameSequence constant_frames(std::size_t n, Fn value, int w = 4, int h = 4, double fps = 30.0) {
    std::vector<Image> frames;
    for (std::size_t i = 0; i < n; ++i) {
        frames.emplace_back(static_cast<std::size_t>(w * h), value(i));
    }
    return FrameSequence(std::move(frames), w, h, 1, fps);
}

inline FrameSequence random_frames(Rng& rng, std::size_t n, int w, int h, int channels = 1, double fps = 30.0) {
    std::vector<Image> frames;
    for (std::size_t i = 0; i < n; ++i) {
        Image img(static_cast<std::size_t>(w * h * channels));
        for (double& v : img) v = rng.uniform();
        frames.push_back(std::move(img));
    }
    return FrameSequence(std::move(frames), w, h, channels, fps);
}

// Frame i holds a frame-index tag in every pixel, so resampled indices can be read back.
inline FrameSequence index_tagged(std::size_t n) {
    return constant_frames(n, [n](std::size_t i) { return static_cast<double>(i) / static_cast<double>(n); }, 2, 2);
}

inline std::vector<double> random_vector(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("chronoscope_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testing_support
