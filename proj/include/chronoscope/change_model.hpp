#pragma once

#include "chronoscope/media.hpp"
#include "chronoscope/metrics.hpp"
#include "chronoscope/mlp.hpp"
#include "chronoscope/motion.hpp"
#include "chronoscope/speed_model.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

namespace chronoscope {

/// Binary classifier: output is a logit for "speed change in the middle third".
struct DetectorModel {
    FeatureConfig features;
    Mlp net;
    /// Window length the detector was trained on.
    double window_s = 2.0;
    std::uint16_t version = kModelFormatVersion;
    nlohmann::json metadata = nlohmann::json::object();
};

/// Number of contrast features appended by detector_features.
inline constexpr std::size_t kContrastFeatures = 3;

/// extract_features over the whole window, followed by
/// ln(last/first), ln(middle/first), ln(last/middle) of the mean motion in
/// each third of the motion profile (each mean floored at 1e-6).
FeatureVector detector_features(const FrameSequence& video, const FeatureConfig& config);

DetectorModel make_detector(const FeatureConfig& features, const std::vector<std::size_t>& hidden, std::uint64_t seed);

/// Numerically stable -[y ln sigma(z) + (1-y) ln(1 - sigma(z))].
double bce_loss(double logit, int label);
double sigmoid(double z);

struct BceTerm {
    std::vector<double> features;
    int label = 0;
};

/// Mean BCE over the terms.
double bce_batch_loss(const Mlp& net, const std::vector<BceTerm>& terms);
double bce_batch_gradient(const Mlp& net, const std::vector<BceTerm>& terms, std::vector<double>& grad);

struct DetectorSample {
    FeatureVector features;
    int label = 0;
};

struct DetectorTrainResult {
    DetectorModel model;
    LossHistory history;
    double train_accuracy = 0.0;
};

/// Uses epochs, batch_size, learning_rate, seed and hidden from the config.
DetectorTrainResult train_detector(const std::vector<DetectorSample>& samples, const TrainConfig& config,
                                   const FeatureConfig& features = {}, double window_s = 2.0);

/// Indices of a class-balanced subset: the majority class is subsampled
/// (seeded) to the size of the minority class; order is preserved.
std::vector<std::size_t> balanced_subset(const std::vector<int>& labels, std::uint64_t seed);

struct Detection {
    double probability = 0.5;
    bool positive = false;
};

/// Visual-only inference; threshold 0.5.
Detection detect(const DetectorModel& model, const FrameSequence& video);

// ---------------------------------------------------------------- protocol

/// 1 iff some change point of the profile lies within the middle third of span.
int middle_third_label(const SpeedProfile& profile, const WindowSpan& span);

struct ProtocolClip {
    const FrameSequence* video = nullptr;
    SpeedProfile profile;
};

struct ProtocolOptions {
    /// Window start spacing; 0 means clip_len_s / 4.
    double stride_s = 0.0;
    bool balance = true;
    std::uint64_t seed = 0;
};

struct ProtocolWindow {
    std::size_t clip_index = 0;
    WindowSpan span;
    int label = 0;
};

/// All windows of all clips, labeled from ground truth, balanced if requested.
std::vector<ProtocolWindow> protocol_windows(const std::vector<ProtocolClip>& clips, double clip_len_s,
                                             const ProtocolOptions& options);

struct ProtocolReport {
    DetectionScores scores;
    std::size_t n_windows = 0;
    std::size_t n_positive = 0;
    std::size_t n_negative = 0;
};

nlohmann::json to_json(const ProtocolReport& report);

using WindowClassifier = std::function<int(const FrameSequence& window)>;

ProtocolReport evaluate_protocol(const std::vector<ProtocolClip>& clips, double clip_len_s,
                                 const ProtocolOptions& options, const WindowClassifier& classifier);
ProtocolReport evaluate_protocol(const DetectorModel& model, const std::vector<ProtocolClip>& clips,
                                 double clip_len_s, const ProtocolOptions& options = {});

// ---------------------------------------------------------------- storage

inline constexpr std::array<char, 4> kDetectorMagic{'C', 'H', 'D', 'M'};

std::string encode_detector(const DetectorModel& model);
DetectorModel decode_detector(const std::string& bytes);
void save_detector(const DetectorModel& model, const std::filesystem::path& path);
DetectorModel load_detector(const std::filesystem::path& path);

}  // namespace chronoscope
