#include "chronoscope/motion.hpp"

#include "chronoscope/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace chronoscope {

MotionProfile motion_profile(const FrameSequence& video) {
    if (video.size() < 2) {
        fail(ErrorKind::insufficient_length, "motion profile needs at least 2 frames");
    }
    const std::size_t n = video.pixels_per_frame();
    MotionProfile out;
    out.magnitudes.resize(video.size() - 1);
    for (std::size_t i = 0; i + 1 < video.size(); ++i) {
        const Image& a = video.frame(i);
        const Image& b = video.frame(i + 1);
        double acc = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            acc += std::abs(b[p] - a[p]);
        }
        out.magnitudes[i] = acc / static_cast<double>(n);
    }
    return out;
}

std::string_view to_string(MotionStat stat) {
    switch (stat) {
        case MotionStat::mean_abs: return "mean_abs";
        case MotionStat::p95_abs: return "p95_abs";
        case MotionStat::changed_frac: return "changed_frac";
    }
    return "unknown";
}

MotionStat motion_stat_from_string(std::string_view name) {
    if (name == "mean_abs") return MotionStat::mean_abs;
    if (name == "p95_abs") return MotionStat::p95_abs;
    if (name == "changed_frac") return MotionStat::changed_frac;
    fail(ErrorKind::invalid_argument, "unknown motion statistic '" + std::string(name) + "'");
}

std::size_t FeatureConfig::length() const {
    std::size_t len = 0;
    for (std::size_t d : strides) {
        if (d < frames) {
            len += (frames - d) * stats.size();
        }
    }
    return len;
}

void FeatureConfig::validate() const {
    if (frames < 2) {
        fail(ErrorKind::invalid_argument, "feature config needs at least 2 frames");
    }
    if (strides.empty() || stats.empty()) {
        fail(ErrorKind::invalid_argument, "feature config needs at least one stride and one statistic");
    }
    for (std::size_t d : strides) {
        if (d != 1 && d != 2 && d != 4) {
            fail(ErrorKind::invalid_argument, "strides must be drawn from {1, 2, 4}");
        }
        if (d >= frames) {
            fail(ErrorKind::invalid_argument, "stride " + std::to_string(d) + " leaves no frame pairs");
        }
    }
    if (!(stat_scale > 0.0)) {
        fail(ErrorKind::invalid_argument, "stat_scale must be positive");
    }
}

std::string FeatureConfig::hash() const {
    std::ostringstream key;
    key << "F" << frames << ";s";
    for (std::size_t d : strides) key << d << ",";
    key << ";t";
    for (MotionStat s : stats) key << to_string(s) << ",";
    char scale[32];
    std::snprintf(scale, sizeof(scale), "%.17g", stat_scale);
    key << ";q" << scale;
    // FNV-1a
    std::uint64_t h = 1469598103934665603ull;
    for (char c : key.str()) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    char out[24];
    std::snprintf(out, sizeof(out), "fc-%016llx", static_cast<unsigned long long>(h));
    return out;
}

nlohmann::json to_json(const FeatureConfig& config) {
    nlohmann::json stats = nlohmann::json::array();
    for (MotionStat s : config.stats) {
        stats.push_back(std::string(to_string(s)));
    }
    return {{"frames", config.frames}, {"strides", config.strides}, {"stats", stats}, {"stat_scale", config.stat_scale}};
}

FeatureConfig feature_config_from_json(const nlohmann::json& j) {
    FeatureConfig c;
    c.frames = j.at("frames").get<std::size_t>();
    c.strides = j.at("strides").get<std::vector<std::size_t>>();
    c.stats.clear();
    for (const auto& s : j.at("stats")) {
        c.stats.push_back(motion_stat_from_string(s.get<std::string>()));
    }
    c.stat_scale = j.at("stat_scale").get<double>();
    c.validate();
    return c;
}

FeatureVector extract_features(const FrameSequence& video, const FeatureConfig& config) {
    config.validate();
    if (video.size() < config.frames) {
        fail(ErrorKind::insufficient_length, "feature extraction needs " + std::to_string(config.frames) +
                                                 " frames, clip has " + std::to_string(video.size()));
    }
    const auto idx = uniform_indices(video.size(), config.frames);
    const std::size_t n = video.pixels_per_frame();
    const auto p95_rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n))) - 1;
    const double inv_n = 1.0 / static_cast<double>(n);
    const double inv_scale = 1.0 / config.stat_scale;

    const bool want_p95 = std::find(config.stats.begin(), config.stats.end(), MotionStat::p95_abs) != config.stats.end();
    FeatureVector out;
    out.config_hash = config.hash();
    out.values.reserve(config.length());
    std::vector<double> diff(n);
    for (std::size_t d : config.strides) {
        for (std::size_t i = 0; i + d < config.frames; ++i) {
            const Image& a = video.frame(idx[i]);
            const Image& b = video.frame(idx[i + d]);
            double sum = 0.0;
            std::size_t changed = 0;
            for (std::size_t p = 0; p < n; ++p) {
                const double v = std::abs(b[p] - a[p]);
                diff[p] = v;
                sum += v;
                changed += v > kChangedThreshold ? 1 : 0;
            }
            double p95 = 0.0;
            if (want_p95) {
                std::nth_element(diff.begin(), diff.begin() + static_cast<std::ptrdiff_t>(p95_rank), diff.end());
                p95 = diff[p95_rank];
            }
            for (MotionStat s : config.stats) {
                double x = 0.0;
                switch (s) {
                    case MotionStat::mean_abs: x = sum * inv_n; break;
                    case MotionStat::p95_abs: x = p95; break;
                    case MotionStat::changed_frac: x = static_cast<double>(changed) * inv_n; break;
                }
                out.values.push_back(std::log1p(x * inv_scale));
            }
        }
    }
    return out;
}

std::vector<double> moving_average(const std::vector<double>& x, std::size_t window) {
    std::vector<double> out(x.size());
    const std::size_t half = window / 2;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const std::size_t b = i >= half ? i - half : 0;
        const std::size_t e = std::min(x.size(), i + (window - half));
        double acc = 0.0;
        for (std::size_t j = b; j < e; ++j) {
            acc += x[j];
        }
        out[i] = acc / static_cast<double>(e - b);
    }
    return out;
}

double flow_change_ratio(const FrameSequence& video) {
    if (video.size() < 7) {
        fail(ErrorKind::insufficient_length, "flow baseline needs at least 7 frames");
    }
    const auto smooth = moving_average(motion_profile(video).magnitudes, 5);
    const std::size_t len = smooth.size();
    double lo = 0.0, hi = 0.0;
    bool any = false;
    for (std::size_t i = 0; i < len; ++i) {
        // middle third: len/3 <= i < 2*len/3
        if (3 * i < len || 3 * i >= 2 * len) {
            continue;
        }
        const double v = std::max(smooth[i], 1e-6);
        lo = any ? std::min(lo, v) : v;
        hi = any ? std::max(hi, v) : v;
        any = true;
    }
    return hi / lo;
}

bool flow_baseline_detect(const FrameSequence& video, double threshold) {
    return flow_change_ratio(video) > threshold;
}

double calibrate_flow_threshold(const std::vector<double>& ratios, const std::vector<int>& labels) {
    if (ratios.empty() || ratios.size() != labels.size()) {
        fail(ErrorKind::empty_set, "threshold calibration needs matching, non-empty ratios and labels");
    }
    std::vector<double> sorted = ratios;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    std::vector<double> candidates{sorted.front() * 0.5};
    for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
        candidates.push_back(0.5 * (sorted[i] + sorted[i + 1]));
    }
    candidates.push_back(sorted.back() * 2.0);
    double best_t = candidates.front();
    std::size_t best_correct = 0;
    for (double t : candidates) {
        std::size_t correct = 0;
        for (std::size_t i = 0; i < ratios.size(); ++i) {
            correct += (ratios[i] > t ? 1 : 0) == labels[i] ? 1 : 0;
        }
        if (correct > best_correct) {
            best_correct = correct;
            best_t = t;
        }
    }
    return best_t;
}

}  // namespace chronoscope
