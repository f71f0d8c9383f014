#include "chronoscope/media.hpp"

#include "chronoscope/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace chronoscope {

FrameSequence::FrameSequence(std::vector<Image> frames, int width, int height, int channels, double fps)
    : frames_(std::move(frames)), width_(width), height_(height), channels_(channels), fps_(fps) {
    if (frames_.empty()) {
        fail(ErrorKind::insufficient_length, "frame sequence must hold at least one frame");
    }
    if (width_ <= 0 || height_ <= 0) {
        fail(ErrorKind::invalid_argument, "frame dimensions must be positive");
    }
    if (channels_ != 1 && channels_ != 3) {
        fail(ErrorKind::unsupported_channels, "channels must be 1 or 3, got " + std::to_string(channels_));
    }
    if (!(fps_ > 0.0) || !std::isfinite(fps_)) {
        fail(ErrorKind::invalid_argument, "fps must be positive");
    }
    const std::size_t expected = pixels_per_frame();
    for (std::size_t i = 0; i < frames_.size(); ++i) {
        const Image& f = frames_[i];
        if (f.size() != expected) {
            std::ostringstream msg;
            msg << "frame " << i << " holds " << f.size() << " values, expected " << expected;
            fail(ErrorKind::shape, msg.str());
        }
        for (double v : f) {
            if (!(v >= 0.0 && v <= 1.0)) {
                fail(ErrorKind::invalid_argument, "frame " + std::to_string(i) + " has a pixel outside [0,1]");
            }
        }
    }
}

FrameSequence FrameSequence::slice(std::size_t begin, std::size_t end) const {
    if (begin >= end || end > frames_.size()) {
        fail(ErrorKind::invalid_argument, "slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                                              ") out of range for " + std::to_string(frames_.size()) + " frames");
    }
    std::vector<Image> out(frames_.begin() + static_cast<std::ptrdiff_t>(begin),
                           frames_.begin() + static_cast<std::ptrdiff_t>(end));
    return FrameSequence(std::move(out), width_, height_, channels_, fps_);
}

FrameSequence FrameSequence::pick(std::span<const std::size_t> indices) const {
    std::vector<Image> out;
    out.reserve(indices.size());
    for (std::size_t idx : indices) {
        out.push_back(frames_.at(idx));
    }
    return FrameSequence(std::move(out), width_, height_, channels_, fps_);
}

FrameSequence FrameSequence::with_fps(double fps) const {
    return FrameSequence(frames_, width_, height_, channels_, fps);
}

AudioTrack::AudioTrack(std::vector<double> samples, double sample_rate)
    : samples_(std::move(samples)), sample_rate_(sample_rate) {
    if (!(sample_rate_ > 0.0) || !std::isfinite(sample_rate_)) {
        fail(ErrorKind::invalid_argument, "sample_rate must be positive");
    }
    for (double s : samples_) {
        if (!std::isfinite(s) || s < -1.0 || s > 1.0) {
            fail(ErrorKind::invalid_argument, "audio samples must be finite and within [-1,1]");
        }
    }
}

void validate(const Clip& clip) {
    if (clip.true_speed && !(*clip.true_speed > 0.0)) {
        fail(ErrorKind::label, "true_speed must be positive");
    }
    if (clip.audio) {
        const double gap = std::abs(clip.audio->duration_s() - clip.video.duration_s());
        if (gap > 1.0 / clip.video.fps() + 1e-9) {
            fail(ErrorKind::invalid_argument, "audio duration differs from video duration by more than one frame");
        }
    }
}

SpeedProfile::SpeedProfile(std::vector<SpeedSegment> segments) : segments_(std::move(segments)) {
    constexpr double kTol = 1e-9;
    if (segments_.empty()) {
        fail(ErrorKind::profile, "speed profile needs at least one segment");
    }
    if (std::abs(segments_.front().t_start) > kTol) {
        fail(ErrorKind::profile, "speed profile must start at t=0");
    }
    for (std::size_t i = 0; i < segments_.size(); ++i) {
        const SpeedSegment& s = segments_[i];
        if (!(s.speed > 0.0) || !std::isfinite(s.speed)) {
            fail(ErrorKind::profile, "segment " + std::to_string(i) + " has non-positive speed");
        }
        if (!(s.t_end > s.t_start)) {
            fail(ErrorKind::profile, "segment " + std::to_string(i) + " is empty or reversed");
        }
        if (i > 0) {
            const double gap = s.t_start - segments_[i - 1].t_end;
            if (gap > kTol) {
                fail(ErrorKind::profile, "gap before segment " + std::to_string(i));
            }
            if (gap < -kTol) {
                fail(ErrorKind::profile, "overlap before segment " + std::to_string(i));
            }
        }
    }
}

SpeedProfile SpeedProfile::constant(double speed, double duration_s) {
    return SpeedProfile({SpeedSegment{0.0, duration_s, speed}});
}

double SpeedProfile::speed_at(double t) const {
    for (const SpeedSegment& s : segments_) {
        if (t < s.t_end) {
            return s.speed;
        }
    }
    return segments_.back().speed;
}

double SpeedProfile::content_time(double t) const {
    double acc = 0.0;
    for (const SpeedSegment& s : segments_) {
        if (t <= s.t_start) {
            break;
        }
        const double end = std::min(t, s.t_end);
        acc += (end - s.t_start) * s.speed;
    }
    // past the end the last speed continues
    if (t > duration_s()) {
        acc += (t - duration_s()) * segments_.back().speed;
    }
    return acc;
}

std::vector<double> SpeedProfile::change_points() const {
    std::vector<double> out;
    for (std::size_t i = 1; i < segments_.size(); ++i) {
        out.push_back(segments_[i].t_start);
    }
    return out;
}

std::vector<std::size_t> subsample_indices(std::size_t frame_count, double k) {
    if (!(k >= 1.0) || !std::isfinite(k)) {
        fail(ErrorKind::invalid_factor, "subsample factor must be >= 1");
    }
    if (frame_count == 0) {
        fail(ErrorKind::insufficient_length, "cannot subsample an empty sequence");
    }
    const auto last = static_cast<std::size_t>(std::floor(static_cast<double>(frame_count - 1) / k + 1e-9));
    if (last < 1) {
        fail(ErrorKind::insufficient_length, "subsampling " + std::to_string(frame_count) + " frames by " +
                                                 std::to_string(k) + " leaves fewer than 2 frames");
    }
    std::vector<std::size_t> idx(last + 1);
    for (std::size_t i = 0; i <= last; ++i) {
        // round half up
        idx[i] = static_cast<std::size_t>(std::floor(static_cast<double>(i) * k + 0.5));
        idx[i] = std::min(idx[i], frame_count - 1);
    }
    return idx;
}

FrameSequence subsample(const FrameSequence& video, double k) {
    const auto idx = subsample_indices(video.size(), k);
    return video.pick(idx);
}

double max_subsample_factor(std::size_t frame_count, std::size_t min_frames) {
    if (min_frames < 2 || frame_count < min_frames) {
        return 1.0;
    }
    return static_cast<double>(frame_count - 1) / static_cast<double>(min_frames - 1);
}

std::vector<std::size_t> blur_centers(std::size_t frame_count, std::size_t window, std::size_t stride) {
    if (window < 1 || stride < 1) {
        fail(ErrorKind::invalid_argument, "blur window and stride must be >= 1");
    }
    // the first center is floor(w/2), which always leaves ceil(w/2) - 1 frames behind it
    const std::size_t ahead = window / 2;
    std::vector<std::size_t> centers;
    for (std::size_t c = window / 2; c + ahead < frame_count; c += stride) {
        centers.push_back(c);
    }
    return centers;
}

FrameSequence synthesize_blur(const FrameSequence& video, std::size_t window, std::size_t stride) {
    const auto centers = blur_centers(video.size(), window, stride);
    if (centers.empty()) {
        fail(ErrorKind::insufficient_length, "blur window of " + std::to_string(window) + " frames exceeds input of " +
                                                 std::to_string(video.size()) + " frames");
    }
    const std::size_t back = (window + 1) / 2 - 1;
    const std::size_t n = video.pixels_per_frame();
    const double inv = 1.0 / static_cast<double>(window);
    std::vector<Image> out;
    out.reserve(centers.size());
    for (std::size_t c : centers) {
        // mean written as first + mean deviation, so identical frames come back bit-exact
        const Image& first = video.frame(c - back);
        Image dev(n, 0.0);
        Image lo = first;
        Image hi = first;
        for (std::size_t f = c - back + 1; f < c - back + window; ++f) {
            const Image& src = video.frame(f);
            for (std::size_t p = 0; p < n; ++p) {
                dev[p] += src[p] - first[p];
                lo[p] = std::min(lo[p], src[p]);
                hi[p] = std::max(hi[p], src[p]);
            }
        }
        Image acc(n);
        for (std::size_t p = 0; p < n; ++p) {
            acc[p] = std::clamp(first[p] + dev[p] * inv, lo[p], hi[p]);
        }
        out.push_back(std::move(acc));
    }
    return FrameSequence(std::move(out), video.width(), video.height(), video.channels(),
                         video.fps() / static_cast<double>(stride));
}

BlurPair make_blur_pair(const FrameSequence& video, std::size_t window, std::size_t stride) {
    FrameSequence input = synthesize_blur(video, window, stride);
    const auto centers = blur_centers(video.size(), window, stride);
    FrameSequence target = video.slice(centers.front(), centers.back() + 1);
    return BlurPair{std::move(input), std::move(target)};
}

std::vector<std::size_t> uniform_indices(std::size_t frame_count, std::size_t count) {
    if (count == 0 || frame_count < count) {
        fail(ErrorKind::insufficient_length, "need " + std::to_string(count) + " frames, have " +
                                                 std::to_string(frame_count));
    }
    if (count == 1) {
        return {0};
    }
    std::vector<std::size_t> idx(count);
    const double step = static_cast<double>(frame_count - 1) / static_cast<double>(count - 1);
    for (std::size_t i = 0; i < count; ++i) {
        idx[i] = static_cast<std::size_t>(std::floor(static_cast<double>(i) * step + 0.5));
    }
    idx.back() = frame_count - 1;
    return idx;
}

std::vector<WindowSpan> window_grid(std::size_t frame_count, double fps, double window_s, double stride_s) {
    if (!(fps > 0.0) || !(window_s > 0.0) || !(stride_s > 0.0)) {
        fail(ErrorKind::invalid_argument, "window grid needs positive fps, window and stride");
    }
    const auto len = static_cast<std::size_t>(std::llround(window_s * fps));
    std::vector<WindowSpan> out;
    if (len < 1) {
        return out;
    }
    for (std::size_t i = 0;; ++i) {
        const double start_s = static_cast<double>(i) * stride_s;
        const auto start = static_cast<std::size_t>(std::llround(start_s * fps));
        if (start + len > frame_count) {
            break;
        }
        out.push_back(WindowSpan{start, start + len, static_cast<double>(start) / fps, static_cast<double>(len) / fps});
    }
    return out;
}

bool in_middle_third(double t, const WindowSpan& w) {
    const double rel = (t - w.start_s) / w.length_s;
    return rel >= 1.0 / 3.0 && rel <= 2.0 / 3.0;
}

}  // namespace chronoscope
