#pragma once

#include "chronoscope/change_model.hpp"
#include "chronoscope/media.hpp"
#include "chronoscope/speed_model.hpp"

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace chronoscope {

struct FrameSpan {
    std::size_t start_frame = 0;
    std::size_t end_frame = 0;  // exclusive

    std::size_t size() const noexcept { return end_frame - start_frame; }
    friend bool operator==(const FrameSpan&, const FrameSpan&) = default;
};

struct ScanWindow {
    WindowSpan span;
    double probability = 0.0;
};

struct Segmentation {
    std::vector<FrameSpan> spans;
    std::vector<ScanWindow> windows;
    std::vector<std::string> warnings;
};

/// Default scan stride: a quarter window, so the middle thirds of
/// consecutive windows overlap and every instant is tested.
double default_scan_stride(double window_s);

/// Splits the video into spans of homogeneous speed.
///
/// Windows are scanned every stride_s seconds; runs of consecutive positive
/// windows form one change region, cut at the midpoint of the region's first
/// and last window centers. Spans shorter than a window are merged into
/// their longer neighbor. A video shorter than one window comes back as a
/// single span with a warning.
Segmentation segment_by_changes(const FrameSequence& video, const DetectorModel& detector, double window_s,
                                double stride_s);

/// Cuts at the given frames, then merges spans shorter than min_frames.
std::vector<FrameSpan> spans_from_cuts(std::size_t frame_count, std::vector<std::size_t> cuts, std::size_t min_frames);

/// Log-spaced bucket over [0.01, 1]; speed is clamped into that range first
/// and the result into [0, n_buckets - 1].
int compute_bucket_id(double speed, int n_buckets);

struct AnnotationRecord {
    std::string clip_id;
    std::string source_path;
    std::size_t start_frame = 0;
    std::size_t end_frame = 0;
    /// Unclamped estimate; bucket_id uses the clamped value.
    double predicted_speed = 1.0;
    int bucket_id = 0;
    std::size_t iterations_used = 0;
    double detector_confidence = 1.0;
    std::string tool_version;

    friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

nlohmann::json to_json(const AnnotationRecord& r);
AnnotationRecord annotation_record_from_json(const nlohmann::json& j);

struct AnnotationError {
    std::string source_path;
    std::string message;
};

struct AnnotateOptions {
    std::size_t iterations = 3;
    int n_buckets = 10;
    /// 0: the detector's training window.
    double window_s = 0.0;
    /// 0: default_scan_stride(window).
    double stride_s = 0.0;
    unsigned threads = 1;
};

struct AnnotationResult {
    std::vector<AnnotationRecord> records;
    std::vector<AnnotationError> errors;
    std::vector<std::string> warnings;
};

/// Annotates one in-memory clip; clip_id of each record is the source id for
/// a single span and "<id>#<i>" otherwise.
std::vector<AnnotationRecord> annotate_clip(const Clip& clip, const std::string& source_path,
                                            const EstimatorModel& estimator, const DetectorModel& detector,
                                            const AnnotateOptions& options, std::vector<std::string>* warnings = nullptr);

/// Annotates a clip file or every clip source in a directory. Unreadable
/// sources are reported in errors; the rest are still processed. Records are
/// sorted by (source_path, start_frame).
AnnotationResult annotate(const std::filesystem::path& source, const EstimatorModel& estimator,
                          const DetectorModel& detector, const AnnotateOptions& options = {});

/// JSON Lines: one record per line, then {"_summary": {...}}.
std::string manifest_text(const AnnotationResult& result);
void write_manifest(const AnnotationResult& result, const std::filesystem::path& path);
/// Records of a manifest (the summary line is skipped).
std::vector<AnnotationRecord> read_manifest(const std::filesystem::path& path);

}  // namespace chronoscope
