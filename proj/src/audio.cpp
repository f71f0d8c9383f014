#include "chronoscope/audio.hpp"

#include "chronoscope/error.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>

namespace chronoscope {

namespace {

constexpr double kPi = 3.141592653589793;

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 FFT.
void fft(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) {
            j ^= bit;
        }
        j ^= bit;
        if (i < j) {
            std::swap(a[i], a[j]);
        }
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * kPi / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t j = 0; j < len / 2; ++j) {
                const auto u = a[i + j];
                const auto v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

double median(std::vector<double> v) {
    const std::size_t n = v.size();
    std::sort(v.begin(), v.end());
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct WindowStats {
    std::vector<double> values;
    std::size_t voiced = 0;
};

WindowStats gather(const PitchTrack& track, std::size_t begin, std::size_t end) {
    WindowStats s;
    for (std::size_t i = begin; i < end; ++i) {
        if (track.voiced[i]) {
            s.values.push_back(track.log_hz[i]);
            ++s.voiced;
        }
    }
    return s;
}

double mean(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

Spectrogram stft(const AudioTrack& audio, std::size_t window, std::size_t hop) {
    if (window < 64 || !is_power_of_two(window)) {
        fail(ErrorKind::invalid_argument, "STFT window must be a power of two >= 64");
    }
    if (hop == 0 || hop > window) {
        fail(ErrorKind::invalid_argument, "STFT hop must satisfy 0 < hop <= window");
    }
    if (audio.size() < window) {
        fail(ErrorKind::insufficient_audio, "audio has " + std::to_string(audio.size()) +
                                                " samples, shorter than the STFT window of " + std::to_string(window));
    }
    Spectrogram spec;
    spec.frames = 1 + (audio.size() - window) / hop;
    spec.bins = window / 2 + 1;
    spec.hop_s = static_cast<double>(hop) / audio.sample_rate();
    spec.bin_hz = audio.sample_rate() / static_cast<double>(window);
    spec.window_s = static_cast<double>(window) / audio.sample_rate();
    spec.magnitudes.resize(spec.frames * spec.bins);

    std::vector<double> hann(window);
    for (std::size_t n = 0; n < window; ++n) {
        hann[n] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(n) / static_cast<double>(window));
    }
    const auto& x = audio.samples();
    std::vector<std::complex<double>> buf(window);
    for (std::size_t f = 0; f < spec.frames; ++f) {
        const std::size_t off = f * hop;
        for (std::size_t n = 0; n < window; ++n) {
            buf[n] = {x[off + n] * hann[n], 0.0};
        }
        fft(buf);
        for (std::size_t k = 0; k < spec.bins; ++k) {
            spec.magnitudes[f * spec.bins + k] = std::abs(buf[k]);
        }
    }
    return spec;
}

PitchTrack track_pitch(const Spectrogram& spec, double lo_hz, double hi_hz) {
    const double nyquist = spec.bin_hz * static_cast<double>(spec.bins - 1);
    if (!(lo_hz < hi_hz) || lo_hz < 0.0 || hi_hz > nyquist + 1e-9) {
        fail(ErrorKind::invalid_band, "pitch band must satisfy 0 <= lo < hi <= Nyquist");
    }
    const auto k_lo = static_cast<std::size_t>(std::ceil(lo_hz / spec.bin_hz));
    const auto k_hi = std::min(spec.bins - 1, static_cast<std::size_t>(std::floor(hi_hz / spec.bin_hz)));
    if (k_lo > k_hi) {
        fail(ErrorKind::invalid_band, "pitch band contains no STFT bins");
    }

    PitchTrack raw;
    raw.hop_s = spec.hop_s;
    raw.window_s = spec.window_s;
    raw.log_hz.assign(spec.frames, 0.0);
    raw.voiced.assign(spec.frames, false);
    for (std::size_t f = 0; f < spec.frames; ++f) {
        double total = 0.0;
        double in_band = 0.0;
        for (std::size_t k = 0; k < spec.bins; ++k) {
            const double e = spec.at(f, k) * spec.at(f, k);
            total += e;
            if (k >= k_lo && k <= k_hi) {
                in_band += e;
            }
        }
        if (!(total > 0.0) || in_band < 0.01 * total) {
            continue;
        }
        std::size_t best = k_lo;
        for (std::size_t k = k_lo; k <= k_hi; ++k) {
            if (spec.at(f, k) > spec.at(f, best)) {
                best = k;
            }
        }
        double offset = 0.0;
        if (best > 0 && best + 1 < spec.bins) {
            // quadratic fit through log magnitudes around the peak
            const double tiny = 1e-300;
            const double a = std::log(spec.at(f, best - 1) + tiny);
            const double b = std::log(spec.at(f, best) + tiny);
            const double c = std::log(spec.at(f, best + 1) + tiny);
            const double denom = a - 2.0 * b + c;
            if (denom < 0.0) {
                offset = std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
            }
        }
        const double hz = (static_cast<double>(best) + offset) * spec.bin_hz;
        if (hz > 0.0) {
            raw.log_hz[f] = std::log(hz);
            raw.voiced[f] = true;
        }
    }

    // median filter of width 5 over voiced neighbours, edge-truncated
    PitchTrack out = raw;
    for (std::size_t f = 0; f < raw.size(); ++f) {
        if (!raw.voiced[f]) {
            continue;
        }
        const std::size_t b = f >= 2 ? f - 2 : 0;
        const std::size_t e = std::min(raw.size(), f + 3);
        out.log_hz[f] = median(gather(raw, b, e).values);
    }
    return out;
}

std::vector<SpeedChangeEvent> detect_pitch_changes(const PitchTrack& track, double min_ratio, std::size_t window_frames) {
    if (!(min_ratio > 1.0)) {
        fail(ErrorKind::invalid_argument, "min_ratio must exceed 1");
    }
    if (window_frames < 3) {
        fail(ErrorKind::invalid_argument, "change-test window must span at least 3 frames");
    }
    const std::size_t n = track.size();
    const std::size_t w = window_frames;
    if (n < 2 * w) {
        fail(ErrorKind::insufficient_track, "pitch track of " + std::to_string(n) + " frames is shorter than two " +
                                                std::to_string(w) + "-frame windows");
    }
    const double threshold = std::log(min_ratio);

    struct Candidate {
        std::size_t t;
        double median_diff;
        double mean_diff;
        double confidence;
    };
    std::vector<Candidate> cands;
    for (std::size_t t = w; t + w <= n; ++t) {
        const WindowStats left = gather(track, t - w, t);
        const WindowStats right = gather(track, t, t + w);
        if (left.values.empty() || right.values.empty()) {
            continue;
        }
        const double d = median(right.values) - median(left.values);
        if (std::abs(d) > threshold) {
            const double conf = static_cast<double>(left.voiced + right.voiced) / static_cast<double>(2 * w);
            cands.push_back({t, d, mean(right.values) - mean(left.values), conf});
        }
    }

    // A step yields a plateau of passing medians; localize each run at the
    // peak of the mean difference, which is sharpest at the true boundary.
    std::vector<Candidate> peaks;
    for (std::size_t i = 0; i < cands.size();) {
        std::size_t j = i;
        Candidate best = cands[i];
        while (j < cands.size() && cands[j].t == cands[i].t + (j - i) &&
               (cands[j].median_diff > 0) == (cands[i].median_diff > 0)) {
            if (std::abs(cands[j].mean_diff) > std::abs(best.mean_diff)) {
                best = cands[j];
            }
            ++j;
        }
        peaks.push_back(best);
        i = j;
    }

    // non-maximum suppression within one window length
    std::vector<std::size_t> order(peaks.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(peaks[a].median_diff) > std::abs(peaks[b].median_diff);
    });
    std::vector<Candidate> kept;
    for (std::size_t idx : order) {
        const Candidate& c = peaks[idx];
        const bool clear = std::none_of(kept.begin(), kept.end(), [&](const Candidate& k) {
            return (k.t > c.t ? k.t - c.t : c.t - k.t) < w;
        });
        if (clear) {
            kept.push_back(c);
        }
    }
    std::sort(kept.begin(), kept.end(), [](const Candidate& a, const Candidate& b) { return a.t < b.t; });

    std::vector<SpeedChangeEvent> events;
    for (const Candidate& c : kept) {
        // boundary between frames t-1 and t
        const double time = track.frame_time(c.t) - 0.5 * track.hop_s;
        events.push_back(SpeedChangeEvent{time, c.median_diff > 0 ? ChangeDirection::up : ChangeDirection::down,
                                          std::abs(c.median_diff), c.confidence});
    }
    return events;
}

std::size_t AudioParams::change_window_frames(double sample_rate) const {
    const auto frames = static_cast<std::size_t>(std::llround(change_window_s * sample_rate / static_cast<double>(hop)));
    return std::max<std::size_t>(3, frames);
}

std::vector<SpeedChangeEvent> detect_speed_changes(const AudioTrack& audio, const AudioParams& params) {
    const Spectrogram spec = stft(audio, params.window, params.hop);
    const double nyquist = 0.5 * audio.sample_rate();
    const PitchTrack track = track_pitch(spec, params.band_lo_hz, std::min(params.band_hi_hz, nyquist));
    return detect_pitch_changes(track, params.min_ratio, params.change_window_frames(audio.sample_rate()));
}

HarvestResult harvest_labels(const Clip& clip, double clip_len_s, double stride_s, const AudioParams& params) {
    if (!clip.audio) {
        fail(ErrorKind::missing_audio, "clip '" + clip.clip_id + "' has no audio track to harvest labels from");
    }
    if (!(clip_len_s > 0.0) || clip_len_s > clip.video.duration_s() + 1e-9) {
        fail(ErrorKind::invalid_argument, "window length must be positive and no longer than the clip");
    }
    if (stride_s <= 0.0) {
        stride_s = clip_len_s / 6.0;
    }
    HarvestResult result;
    result.events = detect_speed_changes(*clip.audio, params);
    const double hop_s = static_cast<double>(params.hop) / clip.audio->sample_rate();
    for (const WindowSpan& span : window_grid(clip.video.size(), clip.video.fps(), clip_len_s, stride_s)) {
        bool ambiguous = false;
        int label = 0;
        for (const SpeedChangeEvent& e : result.events) {
            if (e.time_s < span.start_s || e.time_s >= span.end_s()) {
                continue;
            }
            const double third = span.start_s + span.length_s / 3.0;
            const double two_thirds = span.start_s + 2.0 * span.length_s / 3.0;
            if (std::abs(e.time_s - third) <= hop_s || std::abs(e.time_s - two_thirds) <= hop_s) {
                ambiguous = true;
            }
            if (in_middle_third(e.time_s, span)) {
                label = 1;
            }
        }
        if (ambiguous) {
            ++result.discarded;
            continue;
        }
        result.windows.push_back(LabeledWindow{span, label});
    }
    return result;
}

nlohmann::json to_json(const SpeedChangeEvent& event) {
    return {{"time_s", event.time_s},
            {"direction", event.direction == ChangeDirection::up ? "up" : "down"},
            {"magnitude", event.magnitude},
            {"confidence", event.confidence}};
}

nlohmann::json events_to_json(const std::vector<SpeedChangeEvent>& events) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : events) {
        arr.push_back(to_json(e));
    }
    return arr;
}

std::vector<SpeedChangeEvent> events_from_json(const nlohmann::json& j) {
    std::vector<SpeedChangeEvent> out;
    try {
        for (const auto& e : j) {
            out.push_back(SpeedChangeEvent{e.at("time_s").get<double>(),
                                           e.value("direction", std::string("up")) == "down" ? ChangeDirection::down
                                                                                              : ChangeDirection::up,
                                           e.value("magnitude", 0.0), e.value("confidence", 1.0)});
        }
    } catch (const nlohmann::json::exception& ex) {
        fail(ErrorKind::format, std::string("malformed event list: ") + ex.what());
    }
    return out;
}

}  // namespace chronoscope
