#include "chronoscope/annotator.hpp"

#include "chronoscope/error.hpp"
#include "chronoscope/media_io.hpp"
#include "chronoscope/parallel.hpp"
#include "chronoscope/synth.hpp"
#include "chronoscope/version.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <tuple>

namespace chronoscope {

double default_scan_stride(double window_s) {
    return window_s / 4.0;
}

std::vector<FrameSpan> spans_from_cuts(std::size_t frame_count, std::vector<std::size_t> cuts, std::size_t min_frames) {
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    std::vector<FrameSpan> spans;
    std::size_t begin = 0;
    for (std::size_t c : cuts) {
        if (c > begin && c < frame_count) {
            spans.push_back({begin, c});
            begin = c;
        }
    }
    spans.push_back({begin, frame_count});

    // Repeatedly fold the shortest undersized span into its longer neighbor.
    while (spans.size() > 1) {
        std::size_t worst = spans.size();
        for (std::size_t i = 0; i < spans.size(); ++i) {
            if (spans[i].size() < min_frames && (worst == spans.size() || spans[i].size() < spans[worst].size())) {
                worst = i;
            }
        }
        if (worst == spans.size()) {
            break;
        }
        std::size_t into;
        if (worst == 0) {
            into = 1;
        } else if (worst + 1 == spans.size()) {
            into = worst - 1;
        } else {
            into = spans[worst - 1].size() >= spans[worst + 1].size() ? worst - 1 : worst + 1;
        }
        const std::size_t lo = std::min(worst, into);
        spans[lo] = {spans[lo].start_frame, spans[lo + 1].end_frame};
        spans.erase(spans.begin() + static_cast<std::ptrdiff_t>(lo + 1));
    }
    return spans;
}

Segmentation segment_by_changes(const FrameSequence& video, const DetectorModel& detector, double window_s,
                                double stride_s) {
    Segmentation seg;
    const auto window_frames = static_cast<std::size_t>(std::llround(window_s * video.fps()));
    if (video.size() < window_frames) {
        seg.spans.push_back({0, video.size()});
        seg.warnings.push_back("video shorter than one detector window; kept as a single span");
        return seg;
    }
    for (const WindowSpan& w : window_grid(video.size(), video.fps(), window_s, stride_s)) {
        seg.windows.push_back({w, detect(detector, video.slice(w.start_frame, w.end_frame)).probability});
    }
    std::vector<std::size_t> cuts;
    std::size_t i = 0;
    while (i < seg.windows.size()) {
        if (seg.windows[i].probability <= 0.5) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j + 1 < seg.windows.size() && seg.windows[j + 1].probability > 0.5) {
            ++j;
        }
        const auto center = [&](const WindowSpan& w) {
            return 0.5 * static_cast<double>(w.start_frame + w.end_frame);
        };
        const double mid = 0.5 * (center(seg.windows[i].span) + center(seg.windows[j].span));
        cuts.push_back(static_cast<std::size_t>(std::llround(mid)));
        i = j + 1;
    }
    seg.spans = spans_from_cuts(video.size(), cuts, window_frames);
    return seg;
}

int compute_bucket_id(double speed, int n_buckets) {
    if (!(speed > 0.0)) {
        fail(ErrorKind::domain, "speed must be positive");
    }
    if (n_buckets < 1) {
        fail(ErrorKind::invalid_argument, "n_buckets must be >= 1");
    }
    const double s = std::clamp(speed, 0.01, 1.0);
    const double raw = (std::log(s) - std::log(0.01)) / (std::log(1.0) - std::log(0.01)) * n_buckets;
    const auto id = static_cast<int>(std::floor(raw));
    return std::clamp(id, 0, n_buckets - 1);
}

nlohmann::json to_json(const AnnotationRecord& r) {
    return {{"clip_id", r.clip_id},
            {"source_path", r.source_path},
            {"start_frame", r.start_frame},
            {"end_frame", r.end_frame},
            {"predicted_speed", r.predicted_speed},
            {"bucket_id", r.bucket_id},
            {"iterations_used", r.iterations_used},
            {"detector_confidence", r.detector_confidence},
            {"tool_version", r.tool_version}};
}

AnnotationRecord annotation_record_from_json(const nlohmann::json& j) {
    AnnotationRecord r;
    try {
        r.clip_id = j.at("clip_id").get<std::string>();
        r.source_path = j.at("source_path").get<std::string>();
        r.start_frame = j.at("start_frame").get<std::size_t>();
        r.end_frame = j.at("end_frame").get<std::size_t>();
        r.predicted_speed = j.at("predicted_speed").get<double>();
        r.bucket_id = j.at("bucket_id").get<int>();
        r.iterations_used = j.at("iterations_used").get<std::size_t>();
        r.detector_confidence = j.at("detector_confidence").get<double>();
        r.tool_version = j.at("tool_version").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::format, std::string("bad annotation record: ") + e.what());
    }
    return r;
}

std::vector<AnnotationRecord> annotate_clip(const Clip& clip, const std::string& source_path,
                                            const EstimatorModel& estimator, const DetectorModel& detector,
                                            const AnnotateOptions& options, std::vector<std::string>* warnings) {
    const double window = options.window_s > 0.0 ? options.window_s : detector.window_s;
    const double stride = options.stride_s > 0.0 ? options.stride_s : default_scan_stride(window);
    const Segmentation seg = segment_by_changes(clip.video, detector, window, stride);
    if (warnings) {
        for (const auto& w : seg.warnings) {
            warnings->push_back(source_path + ": " + w);
        }
    }
    std::vector<AnnotationRecord> out;
    for (std::size_t i = 0; i < seg.spans.size(); ++i) {
        const FrameSpan& span = seg.spans[i];
        const PredictionTrace trace = predict_iterative(
            estimator, clip.video.slice(span.start_frame, span.end_frame), options.iterations, options.threads);
        double max_p = 0.0;
        for (const ScanWindow& w : seg.windows) {
            if (w.span.start_frame >= span.start_frame && w.span.end_frame <= span.end_frame) {
                max_p = std::max(max_p, w.probability);
            }
        }
        AnnotationRecord r;
        r.clip_id = seg.spans.size() == 1 ? clip.clip_id : clip.clip_id + "#" + std::to_string(i);
        r.source_path = source_path;
        r.start_frame = span.start_frame;
        r.end_frame = span.end_frame;
        r.predicted_speed = trace.final_speed;
        r.bucket_id = compute_bucket_id(trace.final_speed, options.n_buckets);
        r.iterations_used = trace.steps.size();
        r.detector_confidence = 1.0 - max_p;
        r.tool_version = std::string(kToolVersion);
        out.push_back(std::move(r));
    }
    return out;
}

AnnotationResult annotate(const std::filesystem::path& source, const EstimatorModel& estimator,
                          const DetectorModel& detector, const AnnotateOptions& options) {
    std::vector<std::filesystem::path> sources;
    if (std::filesystem::is_directory(source) && !std::filesystem::exists(source / "meta.txt")) {
        sources = list_clip_sources(source);
    } else {
        sources.push_back(source);
    }
    struct Slot {
        std::vector<AnnotationRecord> records;
        std::vector<std::string> warnings;
        std::string error;
    };
    std::vector<Slot> slots(sources.size());
    AnnotateOptions inner = options;
    inner.threads = 1;  // parallelism is across files
    parallel_for(sources.size(), options.threads, [&](std::size_t i) {
        const std::string path = sources[i].generic_string();
        try {
            const Clip clip = read_clip(sources[i]);
            slots[i].records = annotate_clip(clip, path, estimator, detector, inner, &slots[i].warnings);
        } catch (const std::exception& e) {
            slots[i].error = e.what();
        }
    });
    AnnotationResult result;
    for (std::size_t i = 0; i < sources.size(); ++i) {
        for (auto& r : slots[i].records) {
            result.records.push_back(std::move(r));
        }
        for (auto& w : slots[i].warnings) {
            result.warnings.push_back(std::move(w));
        }
        if (!slots[i].error.empty()) {
            result.errors.push_back({sources[i].generic_string(), slots[i].error});
        }
    }
    std::stable_sort(result.records.begin(), result.records.end(), [](const auto& a, const auto& b) {
        return std::tie(a.source_path, a.start_frame) < std::tie(b.source_path, b.start_frame);
    });
    return result;
}

std::string manifest_text(const AnnotationResult& result) {
    std::string out;
    for (const AnnotationRecord& r : result.records) {
        out += to_json(r).dump();
        out += '\n';
    }
    nlohmann::json errors = nlohmann::json::array();
    for (const AnnotationError& e : result.errors) {
        errors.push_back({{"source_path", e.source_path}, {"message", e.message}});
    }
    const nlohmann::json footer = {{"_summary",
                                    {{"n_records", result.records.size()},
                                     {"n_errors", result.errors.size()},
                                     {"tool_version", std::string(kToolVersion)},
                                     {"errors", errors}}}};
    out += footer.dump();
    out += '\n';
    return out;
}

void write_manifest(const AnnotationResult& result, const std::filesystem::path& path) {
    write_text_file(path, manifest_text(result));
}

std::vector<AnnotationRecord> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        fail(ErrorKind::io, "cannot open manifest " + path.string());
    }
    std::vector<AnnotationRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::format, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (j.contains("_summary")) {
            continue;
        }
        out.push_back(annotation_record_from_json(j));
    }
    return out;
}

}  // namespace chronoscope
