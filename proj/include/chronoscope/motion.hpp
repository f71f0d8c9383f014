#pragma once

#include "chronoscope/media.hpp"

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

namespace chronoscope {

/// Mean absolute pixel difference between each adjacent frame pair.
struct MotionProfile {
    std::vector<double> magnitudes;  // length = frames - 1
};

MotionProfile motion_profile(const FrameSequence& video);

enum class MotionStat { mean_abs, p95_abs, changed_frac };

std::string_view to_string(MotionStat stat);
MotionStat motion_stat_from_string(std::string_view name);

/// Pixels whose absolute difference exceeds this count as changed (half an
/// 8-bit quantization step).
inline constexpr double kChangedThreshold = 0.5 / 255.0;

struct FeatureConfig {
    std::size_t frames = 16;
    std::vector<std::size_t> strides{1, 2, 4};
    std::vector<MotionStat> stats{MotionStat::mean_abs, MotionStat::p95_abs, MotionStat::changed_frac};
    /// Each statistic x is mapped to log(1 + x / stat_scale).
    double stat_scale = 1e-4;

    std::size_t length() const;
    /// Stable identifier of this configuration.
    std::string hash() const;
    void validate() const;

    friend bool operator==(const FeatureConfig&, const FeatureConfig&) = default;
};

nlohmann::json to_json(const FeatureConfig& config);
FeatureConfig feature_config_from_json(const nlohmann::json& j);

struct FeatureVector {
    std::vector<double> values;
    std::string config_hash;
};

/// Selects config.frames frames uniformly (first and last included) and
/// concatenates, in (stride, pair, stat) order, the transformed statistics of
/// |frame[i+d] - frame[i]| for every stride d and pair i.
FeatureVector extract_features(const FrameSequence& video, const FeatureConfig& config);

/// Centered moving average (edge-truncated).
std::vector<double> moving_average(const std::vector<double>& x, std::size_t window);

/// Ratio of extremes of the window-5 smoothed motion profile inside the
/// middle third, each magnitude floored at 1e-6.
double flow_change_ratio(const FrameSequence& video);

/// Flow-style baseline: positive iff flow_change_ratio exceeds threshold.
bool flow_baseline_detect(const FrameSequence& video, double threshold);

/// Threshold maximizing accuracy of `ratio > threshold` against labels.
double calibrate_flow_threshold(const std::vector<double>& ratios, const std::vector<int>& labels);

}  // namespace chronoscope
