#pragma once

#include "chronoscope/media.hpp"
#include "chronoscope/mlp.hpp"
#include "chronoscope/motion.hpp"
#include "chronoscope/random.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace chronoscope {

/// Playback-speed regressor. The network output is log speed.
struct EstimatorModel {
    FeatureConfig features;
    Mlp net;
    /// Clip-level prediction averages log speed over up to this many evenly
    /// spaced windows of features.frames consecutive frames.
    std::size_t prediction_windows = 8;
    std::uint16_t version = kModelFormatVersion;
    nlohmann::json metadata = nlohmann::json::object();
};

EstimatorModel make_estimator(const FeatureConfig& features, const std::vector<std::size_t>& hidden, std::uint64_t seed);

enum class KSampler { truncated_normal, log_uniform };

std::string_view to_string(KSampler s);
KSampler k_sampler_from_string(std::string_view name);

struct TrainConfig {
    std::size_t epochs = 60;
    /// Terms per batch; one in five is a labeled (calibration) term when
    /// labeled data is present.
    std::size_t batch_size = 20;
    double learning_rate = 0.01;
    double lambda_sup = 1.0;
    KSampler k_sampler = KSampler::log_uniform;
    /// log_uniform: ln k ~ U[0, ln k_max]. truncated_normal: k ~ N(1, (k_max/2)^2)
    /// restricted to [1, frame budget].
    double k_max = 4.0;
    std::uint64_t seed = 0;
    std::vector<std::size_t> hidden{64, 64};

    void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------- losses

double forward(const EstimatorModel& model, const FeatureVector& features);

/// [f(V^k) - (ln k + f(V))]^2 with f in log space.
double ssl_loss(const EstimatorModel& model, const FeatureVector& orig, const FeatureVector& accel, double k);

/// (f(V) - ln s)^2.
double sup_loss(const EstimatorModel& model, const FeatureVector& features, double true_speed);

struct SslTerm {
    std::vector<double> orig;
    std::vector<double> accel;
    double k = 1.0;
};

struct SupTerm {
    std::vector<double> features;
    double true_speed = 1.0;
};

struct LossBatch {
    std::vector<SslTerm> ssl;
    std::vector<SupTerm> sup;
    double lambda_sup = 1.0;
};

/// mean(ssl) + lambda_sup * mean(sup); an empty group contributes 0.
double batch_loss(const Mlp& net, const LossBatch& batch);

/// Same value as batch_loss; writes the exact gradient (flat layout of Mlp).
double batch_loss_gradient(const Mlp& net, const LossBatch& batch, std::vector<double>& grad);

// ---------------------------------------------------------------- training

struct LabeledClip {
    const FrameSequence* video = nullptr;
    double true_speed = 1.0;
};

struct TrainData {
    std::vector<const FrameSequence*> unlabeled;
    std::vector<LabeledClip> labeled;
};

struct LossRecord {
    std::size_t step = 0;
    std::size_t epoch = 0;
    double loss = 0.0;
    double ssl = 0.0;
    double sup = 0.0;
    bool zero_features = false;
};

struct LossHistory {
    std::vector<LossRecord> records;
    std::size_t skipped_clips = 0;  // unlabeled clips too short for any k > 1
    std::size_t zero_feature_batches = 0;

    double zero_feature_fraction() const;
    /// Trailing moving average of the total loss.
    std::vector<double> smoothed(std::size_t window) const;
};

struct TrainResult {
    EstimatorModel model;
    LossHistory history;
};

/// Draws k for a clip of frame_count frames; nullopt if no admissible k > 1.
std::optional<double> sample_k(Rng& rng, const TrainConfig& config, std::size_t frame_count, std::size_t frames);

TrainResult train_estimator(const TrainData& data, const TrainConfig& config,
                            const FeatureConfig& features = {}, unsigned threads = 1);

// ---------------------------------------------------------------- inference

/// Start frames of the evaluation windows used for a clip-level prediction.
std::vector<std::size_t> prediction_window_starts(std::size_t frame_count, std::size_t frames, std::size_t max_windows);

/// Mean log speed over the evaluation windows.
double predict_log_speed(const EstimatorModel& model, const FrameSequence& video, unsigned threads = 1);

struct TraceStep {
    double estimate_so_far = 1.0;
    double residual_estimate = 1.0;
    std::size_t frames_remaining = 0;
    double applied_factor = 1.0;
};

struct PredictionTrace {
    std::vector<TraceStep> steps;
    double final_speed = 1.0;
};

nlohmann::json to_json(const PredictionTrace& trace);

/// Repeated estimate-and-accelerate loop over any speed source.
///
/// Source must provide:
///   double estimate()        - speed estimate of the footage currently held
///   double max_factor()      - largest acceleration that keeps enough frames
///   void accelerate(double)  - speeds the held footage up by a factor >= 1
///   std::size_t frames()     - frames currently held
///
/// After j steps with total applied acceleration A, the speed estimate of the
/// original footage is e_j / A. The residual is its ratio to the previous
/// step's estimate, so the running product of residuals is always the current
/// estimate even when the acceleration had to be capped.
template <typename Source>
PredictionTrace iterate_prediction(Source& source, std::size_t iterations) {
    PredictionTrace trace;
    double applied = 1.0;
    double so_far = 1.0;
    for (std::size_t j = 0; j < iterations; ++j) {
        const double e = source.estimate();
        const double estimate = e / applied;
        TraceStep step;
        step.residual_estimate = estimate / so_far;
        step.estimate_so_far = so_far * step.residual_estimate;
        so_far = step.estimate_so_far;
        const double feasible = source.max_factor();
        const bool last = j + 1 == iterations;
        if (!last && e < 1.0 && feasible > 1.0) {
            const double factor = std::min(1.0 / e, feasible);
            source.accelerate(factor);
            applied *= factor;
            step.applied_factor = factor;
        }
        step.frames_remaining = source.frames();
        trace.steps.push_back(step);
        if (step.applied_factor == 1.0) {
            break;
        }
    }
    trace.final_speed = so_far;
    return trace;
}

/// Iterative prediction on a frame sequence: estimate, subsample the held
/// clip by the inverse estimate (capped to keep features.frames frames),
/// repeat.
PredictionTrace predict_iterative(const EstimatorModel& model, const FrameSequence& video, std::size_t iterations = 3,
                                  unsigned threads = 1);
PredictionTrace predict_iterative(const EstimatorModel& model, const Clip& clip, std::size_t iterations = 3,
                                  unsigned threads = 1);

// ---------------------------------------------------------------- storage

inline constexpr std::array<char, 4> kEstimatorMagic{'C', 'H', 'S', 'M'};

std::string encode_estimator(const EstimatorModel& model);
EstimatorModel decode_estimator(const std::string& bytes);
void save_estimator(const EstimatorModel& model, const std::filesystem::path& path);
EstimatorModel load_estimator(const std::filesystem::path& path);

}  // namespace chronoscope
