#pragma once

#include "chronoscope/media.hpp"

#include <cstddef>
#include <vector>

#include <json.hpp>

namespace chronoscope {

struct Spectrogram {
    std::size_t frames = 0;
    std::size_t bins = 0;
    std::vector<double> magnitudes;  // frames x bins, row-major, all >= 0
    double hop_s = 0.0;
    double bin_hz = 0.0;
    double window_s = 0.0;

    double at(std::size_t frame, std::size_t bin) const { return magnitudes[frame * bins + bin]; }
    /// Time of the center of STFT frame t.
    double frame_time(std::size_t t) const { return static_cast<double>(t) * hop_s + 0.5 * window_s; }
};

/// Hann-windowed magnitude STFT. window must be a power of two >= 64.
Spectrogram stft(const AudioTrack& audio, std::size_t window, std::size_t hop);

/// Log-frequency (natural log of Hz) per STFT frame. Unvoiced frames keep a
/// value of 0 and must be ignored by consumers.
struct PitchTrack {
    std::vector<double> log_hz;
    std::vector<bool> voiced;
    double hop_s = 0.0;
    double window_s = 0.0;

    std::size_t size() const noexcept { return log_hz.size(); }
    double frame_time(std::size_t t) const { return static_cast<double>(t) * hop_s + 0.5 * window_s; }
};

PitchTrack track_pitch(const Spectrogram& spec, double lo_hz, double hi_hz);

enum class ChangeDirection { up, down };

struct SpeedChangeEvent {
    double time_s = 0.0;
    ChangeDirection direction = ChangeDirection::up;
    double magnitude = 0.0;   // |log pitch ratio|, nats
    double confidence = 0.0;  // fraction of voiced frames in the two test windows
};

/// Two-sided sliding median test on the log-pitch track.
std::vector<SpeedChangeEvent> detect_pitch_changes(const PitchTrack& track, double min_ratio, std::size_t window_frames);

struct AudioParams {
    std::size_t window = 2048;
    std::size_t hop = 512;
    double band_lo_hz = 50.0;
    double band_hi_hz = 4000.0;
    double min_ratio = 1.3;
    double change_window_s = 0.25;

    std::size_t change_window_frames(double sample_rate) const;
};

/// stft -> track_pitch -> detect_pitch_changes with the given parameters.
std::vector<SpeedChangeEvent> detect_speed_changes(const AudioTrack& audio, const AudioParams& params = {});

struct LabeledWindow {
    WindowSpan span;
    int label = 0;  // 1: change inside the middle third
};

struct HarvestResult {
    std::vector<LabeledWindow> windows;
    std::vector<SpeedChangeEvent> events;
    std::size_t discarded = 0;  // ambiguous windows (event near a third boundary)
};

/// Slides clip_len_s windows over the clip and labels them from audio pitch
/// events: positive iff an event lies in the middle third. Windows with an
/// event within one STFT hop of the 1/3 or 2/3 mark are dropped. stride_s
/// defaults to clip_len_s / 6.
HarvestResult harvest_labels(const Clip& clip, double clip_len_s, double stride_s = 0.0,
                             const AudioParams& params = {});

nlohmann::json to_json(const SpeedChangeEvent& event);
nlohmann::json events_to_json(const std::vector<SpeedChangeEvent>& events);
std::vector<SpeedChangeEvent> events_from_json(const nlohmann::json& j);

}  // namespace chronoscope
