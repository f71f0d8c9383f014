#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace chronoscope {

/// One frame: row-major, channel-interleaved pixel values in [0,1].
using Image = std::vector<double>;

/// A non-empty run of equally sized frames sampled at a fixed rate.
///
/// The constructor enforces the shape and range invariants; after that the
/// object is immutable and safe to share between threads.
class FrameSequence {
public:
    FrameSequence(std::vector<Image> frames, int width, int height, int channels, double fps);

    std::size_t size() const noexcept { return frames_.size(); }
    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    int channels() const noexcept { return channels_; }
    double fps() const noexcept { return fps_; }
    std::size_t pixels_per_frame() const noexcept {
        return static_cast<std::size_t>(width_) * height_ * channels_;
    }
    double duration_s() const noexcept { return static_cast<double>(frames_.size()) / fps_; }

    const Image& frame(std::size_t i) const { return frames_.at(i); }
    const std::vector<Image>& frames() const noexcept { return frames_; }

    /// Frames [begin, end) as a new sequence with the same rate.
    FrameSequence slice(std::size_t begin, std::size_t end) const;
    /// Frames at the given indices, in order.
    FrameSequence pick(std::span<const std::size_t> indices) const;
    FrameSequence with_fps(double fps) const;

    friend bool operator==(const FrameSequence&, const FrameSequence&) = default;

private:
    std::vector<Image> frames_;
    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    double fps_ = 0.0;
};

/// Mono audio, samples in [-1,1].
class AudioTrack {
public:
    AudioTrack(std::vector<double> samples, double sample_rate);

    const std::vector<double>& samples() const noexcept { return samples_; }
    double sample_rate() const noexcept { return sample_rate_; }
    std::size_t size() const noexcept { return samples_.size(); }
    double duration_s() const noexcept { return static_cast<double>(samples_.size()) / sample_rate_; }

    friend bool operator==(const AudioTrack&, const AudioTrack&) = default;

private:
    std::vector<double> samples_;
    double sample_rate_ = 0.0;
};

struct Clip {
    FrameSequence video;
    std::optional<AudioTrack> audio;
    std::optional<double> true_speed;
    std::string clip_id;

    friend bool operator==(const Clip&, const Clip&) = default;
};

/// Throws a profile/invalid-argument error when the clip breaks its invariants.
void validate(const Clip& clip);

struct SpeedSegment {
    double t_start = 0.0;
    double t_end = 0.0;
    double speed = 1.0;

    friend bool operator==(const SpeedSegment&, const SpeedSegment&) = default;
};

/// Piecewise-constant playback speed over wall-clock seconds.
class SpeedProfile {
public:
    explicit SpeedProfile(std::vector<SpeedSegment> segments);
    static SpeedProfile constant(double speed, double duration_s);

    const std::vector<SpeedSegment>& segments() const noexcept { return segments_; }
    double duration_s() const noexcept { return segments_.back().t_end; }
    double speed_at(double t) const;
    /// Content time elapsed after t seconds of playback: integral of speed.
    double content_time(double t) const;
    /// Segment boundaries, excluding 0 and the end.
    std::vector<double> change_points() const;

    friend bool operator==(const SpeedProfile&, const SpeedProfile&) = default;

private:
    std::vector<SpeedSegment> segments_;
};

/// V^k: output frame i is input frame round(i*k); fps metadata unchanged.
FrameSequence subsample(const FrameSequence& video, double k);

/// Input frame indices that subsample() would keep.
std::vector<std::size_t> subsample_indices(std::size_t frame_count, double k);

/// Largest factor that still leaves at least min_frames frames after subsample().
double max_subsample_factor(std::size_t frame_count, std::size_t min_frames);

/// Long-exposure emulation: output frame j averages the window around
/// center c_j = floor(window/2) + j*stride, spanning
/// [c - ceil(window/2) + 1, c + floor(window/2)]. Even windows therefore
/// reach one frame further forward than back.
FrameSequence synthesize_blur(const FrameSequence& video, std::size_t window, std::size_t stride);

/// Centers used by synthesize_blur for a sequence of frame_count frames.
std::vector<std::size_t> blur_centers(std::size_t frame_count, std::size_t window, std::size_t stride);

/// Training pair for temporal super-resolution: a blurred low-rate input and
/// the sharp full-rate frames spanning its first to last center, so that
/// target.size() == (input.size() - 1) * stride + 1.
struct BlurPair {
    FrameSequence input;
    FrameSequence target;
};

BlurPair make_blur_pair(const FrameSequence& video, std::size_t window, std::size_t stride);

/// A fixed-length analysis window over a clip.
struct WindowSpan {
    std::size_t start_frame = 0;
    std::size_t end_frame = 0;  // exclusive
    double start_s = 0.0;
    double length_s = 0.0;

    double end_s() const noexcept { return start_s + length_s; }
};

/// Windows of window_s seconds starting every stride_s seconds that fit
/// entirely inside frame_count frames.
std::vector<WindowSpan> window_grid(std::size_t frame_count, double fps, double window_s, double stride_s);

/// True iff t falls within [1/3, 2/3] of the window.
bool in_middle_third(double t, const WindowSpan& w);

/// F frames chosen uniformly across the sequence, first and last included.
std::vector<std::size_t> uniform_indices(std::size_t frame_count, std::size_t count);

}  // namespace chronoscope
