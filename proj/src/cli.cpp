#include "chronoscope/cli.hpp"

#include "chronoscope/annotator.hpp"
#include "chronoscope/audio.hpp"
#include "chronoscope/change_model.hpp"
#include "chronoscope/error.hpp"
#include "chronoscope/media_io.hpp"
#include "chronoscope/metrics.hpp"
#include "chronoscope/parallel.hpp"
#include "chronoscope/plot.hpp"
#include "chronoscope/speed_model.hpp"
#include "chronoscope/synth.hpp"
#include "chronoscope/version.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

namespace chronoscope::cli {

namespace {

using nlohmann::json;

struct Globals {
    std::uint64_t seed = 0;
    unsigned threads = 1;
    std::string run_manifest;
};

// Output files produced by a command, reported in the run manifest.
using Outputs = std::vector<std::string>;

fs::path with_suffix(const fs::path& out, const std::string& suffix) {
    return out.parent_path() / (out.stem().string() + suffix);
}

void write_json(const json& j, const fs::path& path) {
    write_text_file(path, j.dump(2) + "\n");
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        fail(ErrorKind::io, "cannot open " + path.string());
    }
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        fail(ErrorKind::format, path.string() + ": " + e.what());
    }
}

std::vector<fs::path> sources_of(const fs::path& input) {
    if (!fs::exists(input)) {
        fail(ErrorKind::io, "input does not exist: " + input.string());
    }
    if (fs::is_directory(input) && !fs::exists(input / "meta.txt")) {
        return list_clip_sources(input);
    }
    return {input};
}

std::string iso_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// ---------------------------------------------------------------- ground truth

struct Truth {
    std::string clip_id;
    SpeedProfile profile;
};

/// Ground truth of every clip in a dataset directory, keyed by clip id.
std::map<std::string, Truth> read_truth_dir(const fs::path& dir) {
    std::map<std::string, Truth> out;
    for (const fs::path& src : list_clip_sources(dir)) {
        const fs::path side = sidecar_path(src);
        if (!fs::exists(side)) {
            continue;
        }
        Sidecar sc = read_sidecar(side);
        const std::string id = src.stem().string();
        out.emplace(id, Truth{id, sc.profile});
    }
    return out;
}

/// Speeds keyed by id. Accepts a dataset directory (multi-segment clips
/// contribute "<id>#<i>" per segment), an annotation manifest (.jsonl), or
/// the JSON written by `estimate`.
std::map<std::string, double> read_speeds(const fs::path& path) {
    std::map<std::string, double> out;
    if (fs::is_directory(path)) {
        for (const auto& [id, t] : read_truth_dir(path)) {
            const auto& segs = t.profile.segments();
            if (segs.size() == 1) {
                out[id] = segs[0].speed;
            } else {
                for (std::size_t i = 0; i < segs.size(); ++i) {
                    out[id + "#" + std::to_string(i)] = segs[i].speed;
                }
            }
        }
        return out;
    }
    if (path.extension() == ".jsonl") {
        for (const AnnotationRecord& r : read_manifest(path)) {
            out[r.clip_id] = r.predicted_speed;
        }
        return out;
    }
    const json j = read_json(path);
    if (j.contains("clips")) {
        for (const json& c : j.at("clips")) {
            if (c.contains("final_speed")) {
                out[c.at("clip_id").get<std::string>()] = c.at("final_speed").get<double>();
            }
        }
    } else if (j.contains("speeds")) {
        for (const auto& [id, v] : j.at("speeds").items()) {
            out[id] = v.get<double>();
        }
    } else {
        fail(ErrorKind::format, path.string() + ": no speeds found");
    }
    return out;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
    std::size_t n = 10;
    double speed_lo = 0.01;
    double speed_hi = 1.0;
    double change_fraction = 0.0;
    double duration = 10.0;
    double fps = 30.0;
    double sample_rate = 16000.0;
    int width = 64;
    int height = 64;
    std::string out;
};

Outputs cmd_synth(const SynthArgs& a, const Globals& g, std::ostream& out) {
    DatasetSpec spec;
    spec.n_clips = a.n;
    spec.speed_lo = a.speed_lo;
    spec.speed_hi = a.speed_hi;
    spec.change_fraction = a.change_fraction;
    spec.seed = g.seed;
    spec.duration_s = a.duration;
    spec.fps = a.fps;
    spec.sample_rate = a.sample_rate;
    spec.width = a.width;
    spec.height = a.height;
    const DatasetManifest m = make_dataset(spec, a.out, g.threads);
    out << "wrote " << m.entries.size() << " clips to " << a.out << "\n";
    return {a.out};
}

// ---------------------------------------------------------------- detect-changes

struct DetectArgs {
    std::string input;
    std::string method = "audio";
    std::string model;
    std::string out;
    double window = 2.0;
    double stride = 0.0;
    double threshold = 1.2;
};

json window_json(const WindowSpan& w) {
    return {{"start_frame", w.start_frame}, {"end_frame", w.end_frame}, {"start_s", w.start_s}, {"length_s", w.length_s}};
}

void audio_plots(const Clip& clip, const fs::path& out, Outputs& outputs) {
    const AudioParams p;
    const Spectrogram spec = stft(*clip.audio, p.window, p.hop);
    const PitchTrack track = track_pitch(spec, p.band_lo_hz, std::min(p.band_hi_hz, 0.5 * clip.audio->sample_rate()));
    std::vector<double> t, hz, voiced;
    for (std::size_t i = 0; i < track.size(); ++i) {
        t.push_back(track.frame_time(i));
        hz.push_back(track.voiced[i] ? std::exp(track.log_hz[i]) : std::nan(""));
        voiced.push_back(track.voiced[i] ? 1.0 : 0.0);
    }
    const fs::path csv = with_suffix(out, ".pitch.csv");
    write_text_file(csv, csv_table({"time_s", "pitch_hz", "voiced"}, {t, hz, voiced}));
    ChartOptions co;
    co.title = "Pitch track: " + clip.clip_id;
    co.x_label = "time (s)";
    co.y_label = "pitch (Hz)";
    co.log_y = true;
    const fs::path svg = with_suffix(out, ".pitch.svg");
    write_text_file(svg, line_chart_svg({{"pitch", t, hz}}, co));

    // Log-magnitude spectrogram up to the band limit, downsampled for size.
    const std::size_t max_bin = std::min<std::size_t>(
        spec.bins, static_cast<std::size_t>(p.band_hi_hz / spec.bin_hz) + 1);
    const std::size_t rows = std::min<std::size_t>(max_bin, 96);
    const std::size_t cols = std::min<std::size_t>(spec.frames, 240);
    std::vector<double> grid(rows * cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t b = r * max_bin / rows;
            const std::size_t f = c * spec.frames / cols;
            grid[r * cols + c] = std::log1p(spec.at(f, b));
        }
    }
    ChartOptions ho;
    ho.title = "Spectrogram: " + clip.clip_id;
    ho.x_label = "time";
    ho.y_label = "frequency";
    const fs::path hsvg = with_suffix(out, ".spectrogram.svg");
    write_text_file(hsvg, heatmap_svg(grid, rows, cols, ho));
    outputs.insert(outputs.end(), {csv.string(), svg.string(), hsvg.string()});
}

Outputs cmd_detect(const DetectArgs& a, const Globals& g, std::ostream& out) {
    if (a.method != "audio" && a.method != "visual" && a.method != "flow") {
        fail(ErrorKind::invalid_argument, "--method must be audio, visual or flow");
    }
    std::optional<DetectorModel> det;
    if (a.method == "visual") {
        if (a.model.empty()) {
            fail(ErrorKind::invalid_argument, "--method visual needs --model");
        }
        det = load_detector(a.model);
    }
    const auto sources = sources_of(a.input);
    std::vector<json> entries(sources.size());
    parallel_for(sources.size(), g.threads, [&](std::size_t i) {
        json e = {{"clip_id", sources[i].stem().string()}, {"source_path", sources[i].generic_string()}};
        try {
            const Clip clip = read_clip(sources[i]);
            e["fps"] = clip.video.fps();
            e["frames"] = clip.video.size();
            const double stride = a.stride > 0.0 ? a.stride : default_scan_stride(a.window);
            json windows = json::array();
            if (a.method == "audio") {
                const HarvestResult h = harvest_labels(clip, a.window, a.stride);
                e["events"] = events_to_json(h.events);
                for (const LabeledWindow& w : h.windows) {
                    json wj = window_json(w.span);
                    wj["positive"] = w.label;
                    windows.push_back(wj);
                }
                e["discarded"] = h.discarded;
            } else if (a.method == "visual") {
                const Segmentation seg = segment_by_changes(clip.video, *det, a.window, stride);
                json cuts = json::array();
                for (std::size_t s = 1; s < seg.spans.size(); ++s) {
                    cuts.push_back(static_cast<double>(seg.spans[s].start_frame) / clip.video.fps());
                }
                e["change_times_s"] = cuts;
                for (const ScanWindow& w : seg.windows) {
                    json wj = window_json(w.span);
                    wj["probability"] = w.probability;
                    wj["positive"] = w.probability > 0.5 ? 1 : 0;
                    windows.push_back(wj);
                }
            } else {
                for (const WindowSpan& w : window_grid(clip.video.size(), clip.video.fps(), a.window, stride)) {
                    const double r = flow_change_ratio(clip.video.slice(w.start_frame, w.end_frame));
                    json wj = window_json(w);
                    wj["ratio"] = r;
                    wj["positive"] = r > a.threshold ? 1 : 0;
                    windows.push_back(wj);
                }
            }
            e["windows"] = windows;
        } catch (const Error& err) {
            e["error"] = err.what();
        }
        entries[i] = std::move(e);
    });
    json result = {{"method", a.method}, {"window_s", a.window}, {"clips", entries}};
    if (a.method == "flow") {
        result["threshold"] = a.threshold;
    }
    Outputs outputs{a.out};
    write_json(result, a.out);
    if (a.method == "audio" && sources.size() == 1 && !entries[0].contains("error")) {
        audio_plots(read_clip(sources[0]), a.out, outputs);
    }
    std::size_t errors = 0;
    for (const json& e : entries) {
        errors += e.contains("error") ? 1 : 0;
    }
    out << "processed " << sources.size() << " clip(s), " << errors << " error(s); wrote " << a.out << "\n";
    if (errors == sources.size() && !sources.empty()) {
        fail(ErrorKind::io, "every input failed: " + entries[0].value("error", std::string()));
    }
    return outputs;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    std::string data;
    std::string labeled = "20";
    std::size_t epochs = 0;  // 0: model default
    double lr = 0.0;         // 0: model default
    double lambda_sup = 1.0;
    std::string k_sampler = "log_uniform";
    double k_max = 4.0;
    std::size_t batch_size = 0;
    double window = 2.0;
    double stride = 0.1;
    std::string out;
};

void write_loss_history(const LossHistory& h, const fs::path& model_path, const std::string& title, Outputs& outputs) {
    std::vector<double> step, epoch, loss, ssl, sup, smooth;
    const auto sm = h.smoothed(50);
    for (std::size_t i = 0; i < h.records.size(); ++i) {
        const LossRecord& r = h.records[i];
        step.push_back(static_cast<double>(r.step));
        epoch.push_back(static_cast<double>(r.epoch));
        loss.push_back(r.loss);
        ssl.push_back(r.ssl);
        sup.push_back(r.sup);
        smooth.push_back(sm[i]);
    }
    const fs::path csv = with_suffix(model_path, ".loss.csv");
    write_text_file(csv, csv_table({"step", "epoch", "loss", "ssl", "sup", "smoothed_50"}, {step, epoch, loss, ssl, sup, smooth}));
    ChartOptions co;
    co.title = title;
    co.x_label = "step";
    co.y_label = "loss";
    co.log_y = true;
    const fs::path svg = with_suffix(model_path, ".loss.svg");
    write_text_file(svg, line_chart_svg({{"batch", step, loss}, {"smoothed (50)", step, smooth}}, co));
    outputs.push_back(csv.string());
    outputs.push_back(svg.string());
}

std::vector<std::size_t> choose_labeled(const std::vector<fs::path>& sources, const std::map<std::string, Truth>& truth,
                                        const std::string& spec) {
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < sources.size(); ++i) {
        auto it = truth.find(sources[i].stem().string());
        if (it != truth.end() && it->second.profile.segments().size() == 1) {
            candidates.push_back(i);
        }
    }
    const bool numeric = !spec.empty() && std::all_of(spec.begin(), spec.end(), [](char c) { return c >= '0' && c <= '9'; });
    if (numeric) {
        const std::size_t n = std::stoul(spec);
        if (n == 0) {
            return {};
        }
        if (n > candidates.size()) {
            fail(ErrorKind::invalid_argument, "--labeled " + spec + " exceeds the " + std::to_string(candidates.size()) +
                                                  " clips with single-speed ground truth");
        }
        std::vector<std::size_t> out;
        for (std::size_t k : uniform_indices(candidates.size(), n)) {
            out.push_back(candidates[k]);
        }
        return out;
    }
    // a file listing clip ids, one per line
    std::ifstream in(spec);
    if (!in) {
        fail(ErrorKind::io, "cannot open labeled list " + spec);
    }
    std::vector<std::size_t> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        bool found = false;
        for (std::size_t i : candidates) {
            if (sources[i].stem().string() == line) {
                out.push_back(i);
                found = true;
            }
        }
        if (!found) {
            fail(ErrorKind::label, "labeled clip '" + line + "' has no single-speed ground truth");
        }
    }
    return out;
}

TrainConfig train_config(const TrainArgs& a, const Globals& g) {
    TrainConfig c;
    if (a.epochs) c.epochs = a.epochs;
    if (a.lr > 0.0) c.learning_rate = a.lr;
    if (a.batch_size) c.batch_size = a.batch_size;
    c.lambda_sup = a.lambda_sup;
    c.k_sampler = k_sampler_from_string(a.k_sampler);
    c.k_max = a.k_max;
    c.seed = g.seed;
    c.validate();
    return c;
}

Outputs cmd_train_estimator(const TrainArgs& a, const Globals& g, std::ostream& out) {
    const TrainConfig config = train_config(a, g);
    const auto sources = list_clip_sources(a.data);
    if (sources.empty()) {
        fail(ErrorKind::empty_set, "no clips in " + a.data);
    }
    const auto truth = read_truth_dir(a.data);
    std::vector<std::unique_ptr<Clip>> clips(sources.size());
    parallel_for(sources.size(), g.threads, [&](std::size_t i) { clips[i] = std::make_unique<Clip>(read_clip(sources[i])); });
    TrainData data;
    for (const auto& c : clips) {
        data.unlabeled.push_back(&c->video);
    }
    const auto labeled = config.lambda_sup > 0.0 ? choose_labeled(sources, truth, a.labeled) : std::vector<std::size_t>{};
    for (std::size_t i : labeled) {
        data.labeled.push_back({&clips[i]->video, truth.at(sources[i].stem().string()).profile.segments()[0].speed});
    }
    TrainResult r = train_estimator(data, config, FeatureConfig{}, g.threads);
    json labeled_ids = json::array();
    for (std::size_t i : labeled) {
        labeled_ids.push_back(sources[i].stem().string());
    }
    r.model.metadata["labeled_ids"] = labeled_ids;
    save_estimator(r.model, a.out);
    Outputs outputs{a.out};
    write_loss_history(r.history, a.out, "Estimator training loss", outputs);
    const auto sm = r.history.smoothed(50);
    out << "trained estimator on " << data.unlabeled.size() << " clips (" << data.labeled.size() << " labeled), "
        << r.history.records.size() << " steps, final smoothed loss " << (sm.empty() ? 0.0 : sm.back()) << "\n";
    if (r.history.skipped_clips) {
        out << "warning: " << r.history.skipped_clips << " clip(s) too short for acceleration were skipped\n";
    }
    return outputs;
}

Outputs cmd_train_detector(const TrainArgs& a, const Globals& g, std::ostream& out) {
    const TrainConfig config = train_config(a, g);
    const auto sources = list_clip_sources(a.data);
    if (sources.empty()) {
        fail(ErrorKind::empty_set, "no clips in " + a.data);
    }
    const FeatureConfig fc;
    std::vector<std::vector<DetectorSample>> per_clip(sources.size());
    std::vector<std::string> skipped(sources.size());
    parallel_for(sources.size(), g.threads, [&](std::size_t i) {
        try {
            const Clip clip = read_clip(sources[i]);
            const HarvestResult h = harvest_labels(clip, a.window, a.stride);
            for (const LabeledWindow& w : h.windows) {
                per_clip[i].push_back(
                    {detector_features(clip.video.slice(w.span.start_frame, w.span.end_frame), fc), w.label});
            }
        } catch (const Error& e) {
            skipped[i] = e.what();
        }
    });
    std::vector<DetectorSample> all;
    for (auto& v : per_clip) {
        for (auto& s : v) all.push_back(std::move(s));
    }
    std::vector<int> labels;
    for (const auto& s : all) labels.push_back(s.label);
    std::vector<DetectorSample> balanced;
    for (std::size_t i : balanced_subset(labels, Rng::mix(g.seed, 3))) {
        balanced.push_back(all[i]);
    }
    DetectorTrainResult r = train_detector(balanced, config, fc, a.window);
    r.model.metadata["harvested_windows"] = all.size();
    r.model.metadata["harvest_stride_s"] = a.stride;
    save_detector(r.model, a.out);
    Outputs outputs{a.out};
    write_loss_history(r.history, a.out, "Detector training loss (BCE)", outputs);
    std::size_t n_skipped = 0;
    for (const auto& s : skipped) {
        if (!s.empty()) {
            ++n_skipped;
            out << "warning: skipped " << s << "\n";
        }
    }
    out << "trained detector on " << balanced.size() << " balanced windows (" << all.size() << " harvested, "
        << n_skipped << " clips skipped), training accuracy " << r.train_accuracy << "\n";
    return outputs;
}

// ---------------------------------------------------------------- estimate

struct EstimateArgs {
    std::string model;
    std::string input;
    std::size_t iterations = 3;
    std::string out;
};

Outputs cmd_estimate(const EstimateArgs& a, const Globals& g, std::ostream& out) {
    const EstimatorModel model = load_estimator(a.model);
    const auto sources = sources_of(a.input);
    std::vector<json> entries(sources.size());
    parallel_for(sources.size(), g.threads, [&](std::size_t i) {
        const Clip clip = read_clip(sources[i]);
        const PredictionTrace t = predict_iterative(model, clip, a.iterations);
        entries[i] = {{"clip_id", clip.clip_id},
                      {"source_path", sources[i].generic_string()},
                      {"final_speed", t.final_speed},
                      {"trace", to_json(t)}};
    });
    const json result = {{"iterations", a.iterations}, {"clips", entries}};
    if (a.out.empty()) {
        out << result.dump(2) << "\n";
        return {};
    }
    write_json(result, a.out);
    out << "estimated " << entries.size() << " clip(s); wrote " << a.out << "\n";
    return {a.out};
}

// ---------------------------------------------------------------- annotate

struct AnnotateArgs {
    std::string estimator;
    std::string detector;
    std::string input;
    std::string out;
    std::size_t iterations = 3;
    int buckets = 10;
    double window = 0.0;
    double stride = 0.0;
};

Outputs cmd_annotate(const AnnotateArgs& a, const Globals& g, std::ostream& out) {
    const EstimatorModel est = load_estimator(a.estimator);
    const DetectorModel det = load_detector(a.detector);
    AnnotateOptions o;
    o.iterations = a.iterations;
    o.n_buckets = a.buckets;
    o.window_s = a.window;
    o.stride_s = a.stride;
    o.threads = g.threads;
    if (!fs::exists(a.input)) {
        fail(ErrorKind::io, "input does not exist: " + a.input);
    }
    const AnnotationResult r = annotate(a.input, est, det, o);
    write_manifest(r, a.out);
    Outputs outputs{a.out};

    // Speed timeline per source, in seconds.
    std::map<std::string, Series> by_source;
    std::vector<double> idx, start, end, speed, bucket;
    for (const AnnotationRecord& rec : r.records) {
        Series& s = by_source[rec.source_path];
        s.name = fs::path(rec.source_path).stem().string();
        // frame indices; the fps is not in the record
        s.x.push_back(static_cast<double>(rec.start_frame));
        s.y.push_back(rec.predicted_speed);
        s.x.push_back(static_cast<double>(rec.end_frame));
        s.y.push_back(rec.predicted_speed);
        idx.push_back(static_cast<double>(idx.size()));
        start.push_back(static_cast<double>(rec.start_frame));
        end.push_back(static_cast<double>(rec.end_frame));
        speed.push_back(rec.predicted_speed);
        bucket.push_back(rec.bucket_id);
    }
    const fs::path csv = with_suffix(a.out, ".timeline.csv");
    write_text_file(csv, csv_table({"record", "start_frame", "end_frame", "predicted_speed", "bucket_id"},
                                   {idx, start, end, speed, bucket}));
    outputs.push_back(csv.string());
    if (!by_source.empty() && by_source.size() <= 6) {
        std::vector<Series> series;
        for (auto& [k, s] : by_source) series.push_back(s);
        ChartOptions co;
        co.title = "Estimated playback speed";
        co.x_label = "frame";
        co.y_label = "speed";
        co.log_y = true;
        const fs::path svg = with_suffix(a.out, ".timeline.svg");
        write_text_file(svg, line_chart_svg(series, co));
        outputs.push_back(svg.string());
    }
    for (const auto& w : r.warnings) {
        out << "warning: " << w << "\n";
    }
    for (const auto& e : r.errors) {
        out << "error: " << e.source_path << ": " << e.message << "\n";
    }
    out << "annotated " << r.records.size() << " span(s), " << r.errors.size() << " error(s); wrote " << a.out << "\n";
    return outputs;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
    std::string pred;
    std::string gt;
    std::string out;
    double tolerance = 0.1;
};

Outputs emit_eval(const json& j, const std::string& table, const EvalArgs& a, std::ostream& out) {
    out << table;
    if (a.out.empty()) {
        return {};
    }
    write_json(j, a.out);
    return {a.out};
}

Outputs cmd_eval_speed(const EvalArgs& a, const Globals&, std::ostream& out) {
    const auto pred = read_speeds(a.pred);
    const auto gt = read_speeds(a.gt);
    std::vector<SpeedEvalItem> items;
    for (const auto& [id, p] : pred) {
        auto it = gt.find(id);
        if (it != gt.end()) {
            items.push_back({id, p, it->second, 0.0});
        }
    }
    if (items.empty()) {
        fail(ErrorKind::empty_set, "no clip ids in common between prediction and ground truth");
    }
    const SpeedEvalReport r = evaluate_speeds(items);
    return emit_eval(to_json(r), format_table(r), a, out);
}

Outputs cmd_eval_changes(const EvalArgs& a, const Globals&, std::ostream& out) {
    const json pred = read_json(a.pred);
    const auto truth = read_truth_dir(a.gt);
    std::vector<int> p, t;
    for (const json& c : pred.at("clips")) {
        if (c.contains("error")) continue;
        auto it = truth.find(c.at("clip_id").get<std::string>());
        if (it == truth.end()) continue;
        for (const json& w : c.at("windows")) {
            WindowSpan span{w.at("start_frame").get<std::size_t>(), w.at("end_frame").get<std::size_t>(),
                            w.at("start_s").get<double>(), w.at("length_s").get<double>()};
            p.push_back(w.at("positive").get<int>());
            t.push_back(middle_third_label(it->second.profile, span));
        }
    }
    if (p.empty()) {
        fail(ErrorKind::empty_set, "no windows matched ground truth");
    }
    const DetectionScores s = detection_scores(p, t);
    json j = to_json(s);
    j["n_windows"] = p.size();
    return emit_eval(j, format_table(s), a, out);
}

Outputs cmd_eval_events(const EvalArgs& a, const Globals&, std::ostream& out) {
    const json pred = read_json(a.pred);
    const auto truth = read_truth_dir(a.gt);
    EventScores total;
    json per_clip = json::array();
    for (const json& c : pred.at("clips")) {
        if (c.contains("error") || !c.contains("events")) continue;
        const std::string id = c.at("clip_id").get<std::string>();
        auto it = truth.find(id);
        if (it == truth.end()) continue;
        std::vector<double> pt;
        for (const SpeedChangeEvent& e : events_from_json(c.at("events"))) {
            pt.push_back(e.time_s);
        }
        const EventScores s = event_f1(pt, it->second.profile.change_points(), a.tolerance);
        total.matched += s.matched;
        total.n_pred += s.n_pred;
        total.n_truth += s.n_truth;
        per_clip.push_back({{"clip_id", id}, {"scores", to_json(s)}});
    }
    total.precision = total.n_pred ? static_cast<double>(total.matched) / total.n_pred : 1.0;
    total.recall = total.n_truth ? static_cast<double>(total.matched) / total.n_truth : 1.0;
    total.f1 = total.precision + total.recall > 0 ? 2 * total.precision * total.recall / (total.precision + total.recall) : 0.0;
    json j = to_json(total);
    j["tolerance_s"] = a.tolerance;
    j["clips"] = per_clip;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%10s %10s %10s %8s %8s %8s\n%10.3f %10.3f %10.3f %8zu %8zu %8zu\n", "precision",
                  "recall", "F1", "matched", "pred", "truth", total.precision, total.recall, total.f1, total.matched,
                  total.n_pred, total.n_truth);
    return emit_eval(j, buf, a, out);
}

// ---------------------------------------------------------------- blur-synth

struct BlurArgs {
    std::string input;
    std::size_t window = 8;
    std::size_t stride = 8;
    std::string out;
};

Outputs cmd_blur(const BlurArgs& a, const Globals& g, std::ostream& out) {
    const auto sources = sources_of(a.input);
    fs::create_directories(a.out);
    std::vector<json> entries(sources.size());
    parallel_for(sources.size(), g.threads, [&](std::size_t i) {
        const Clip clip = read_clip(sources[i]);
        const BlurPair pair = make_blur_pair(clip.video, a.window, a.stride);
        const fs::path dir = fs::path(a.out) / clip.clip_id;
        fs::create_directories(dir);
        write_clip(quantize_for_storage(Clip{pair.input, std::nullopt, std::nullopt, "input"}), dir / "input.chrn");
        write_clip(quantize_for_storage(Clip{pair.target, std::nullopt, std::nullopt, "target"}), dir / "target.chrn");
        entries[i] = {{"clip_id", clip.clip_id},
                      {"input_frames", pair.input.size()},
                      {"target_frames", pair.target.size()},
                      {"input_fps", pair.input.fps()},
                      {"target_fps", pair.target.fps()}};
    });
    const json j = {{"window", a.window}, {"stride", a.stride}, {"pairs", entries}};
    write_json(j, fs::path(a.out) / "pairs.json");
    out << "wrote " << entries.size() << " blur pair(s) to " << a.out << "\n";
    return {a.out};
}

// ---------------------------------------------------------------- manifest

std::vector<std::string> resolved_args(CLI::App& app, std::vector<CLI::App*> chain, json& resolved) {
    std::vector<std::string> args;
    const auto add = [&](CLI::App* level, bool global) {
        for (const CLI::Option* o : level->get_options()) {
            if (o->get_lnames().empty()) continue;
            const std::string name = o->get_lnames().front();
            if (name == "help" || name == "run-manifest") continue;
            std::vector<std::string> values;
            if (o->count() > 0) {
                values = o->results();
            } else if (!o->get_default_str().empty()) {
                values = {o->get_default_str()};
            } else {
                continue;
            }
            for (const auto& v : values) {
                args.push_back("--" + name);
                args.push_back(v);
            }
            json& slot = global ? resolved : resolved[level->get_name()];
            slot[name] = values.size() == 1 ? json(values[0]) : json(values);
        }
    };
    add(&app, true);
    for (CLI::App* level : chain) {
        args.push_back(level->get_name());
        add(level, false);
    }
    return args;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
    CLI::App app{"chronoscope: playback-speed estimation, change detection and annotation", "chronoscope"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", std::string(kToolVersion));

    Globals g;
    app.add_option("--seed", g.seed, "Random seed");
    app.add_option("--threads", g.threads, "Worker threads (1 = bit-reproducible)")->check(CLI::Range(1u, 1024u));
    app.add_option("--run-manifest", g.run_manifest, "Where to write the run manifest (default <out>.run.json)");

    SynthArgs synth;
    auto* s_synth = app.add_subcommand("synth", "Generate a synthetic dataset with ground-truth sidecars");
    s_synth->add_option("--n", synth.n, "Number of clips");
    s_synth->add_option("--speed-lo", synth.speed_lo, "Lowest playback speed");
    s_synth->add_option("--speed-hi", synth.speed_hi, "Highest playback speed");
    s_synth->add_option("--change-fraction", synth.change_fraction, "Fraction of clips with one speed change")
        ->check(CLI::Range(0.0, 1.0));
    s_synth->add_option("--duration", synth.duration, "Clip duration in seconds");
    s_synth->add_option("--fps", synth.fps, "Frame rate");
    s_synth->add_option("--sample-rate", synth.sample_rate, "Audio sample rate");
    s_synth->add_option("--width", synth.width, "Frame width");
    s_synth->add_option("--height", synth.height, "Frame height");
    s_synth->add_option("--out", synth.out, "Output directory")->required();

    DetectArgs detect_args;
    auto* s_detect = app.add_subcommand("detect-changes", "Detect speed changes from audio, frames, or flow energy");
    s_detect->add_option("--input", detect_args.input, "Clip file or directory")->required();
    s_detect->add_option("--method", detect_args.method, "audio | visual | flow")
        ->check(CLI::IsMember({"audio", "visual", "flow"}));
    s_detect->add_option("--model", detect_args.model, "Detector model (visual)");
    s_detect->add_option("--window", detect_args.window, "Window length in seconds");
    s_detect->add_option("--stride", detect_args.stride, "Window stride in seconds (0: method default)");
    s_detect->add_option("--threshold", detect_args.threshold, "Flow ratio threshold");
    s_detect->add_option("--out", detect_args.out, "Output JSON")->required();

    TrainArgs train_args;
    auto* s_train = app.add_subcommand("train", "Train a model");
    s_train->require_subcommand(1);
    const auto add_train_opts = [&](CLI::App* sub) {
        sub->add_option("--data", train_args.data, "Dataset directory")->required();
        sub->add_option("--epochs", train_args.epochs, "Epochs (0: default)");
        sub->add_option("--lr", train_args.lr, "Learning rate (0: default)");
        sub->add_option("--batch-size", train_args.batch_size, "Batch size (0: default)");
        sub->add_option("--out", train_args.out, "Model file")->required();
    };
    auto* s_train_est = s_train->add_subcommand("estimator", "Train the playback-speed estimator");
    add_train_opts(s_train_est);
    s_train_est->add_option("--labeled", train_args.labeled, "Labeled clip count, or a file of clip ids");
    s_train_est->add_option("--lambda-sup", train_args.lambda_sup, "Weight of the calibration loss");
    s_train_est->add_option("--k-sampler", train_args.k_sampler, "log_uniform | truncated_normal")
        ->check(CLI::IsMember({"log_uniform", "truncated_normal"}));
    s_train_est->add_option("--k-max", train_args.k_max, "Acceleration range parameter");
    auto* s_train_det = s_train->add_subcommand("detector", "Train the visual speed-change detector on audio labels");
    add_train_opts(s_train_det);
    s_train_det->add_option("--window", train_args.window, "Window length in seconds");
    s_train_det->add_option("--stride", train_args.stride, "Label harvesting stride in seconds");

    EstimateArgs est_args;
    auto* s_est = app.add_subcommand("estimate", "Estimate playback speed with iterative prediction");
    s_est->add_option("--model", est_args.model, "Estimator model")->required();
    s_est->add_option("--input", est_args.input, "Clip file or directory")->required();
    s_est->add_option("--iterations", est_args.iterations, "Prediction unrolls")->check(CLI::Range(1, 100));
    s_est->add_option("--out", est_args.out, "Output JSON (default: standard output)");

    AnnotateArgs ann_args;
    auto* s_ann = app.add_subcommand("annotate", "Segment clips and annotate per-span speed buckets");
    s_ann->add_option("--estimator", ann_args.estimator, "Estimator model")->required();
    s_ann->add_option("--detector", ann_args.detector, "Detector model")->required();
    s_ann->add_option("--input", ann_args.input, "Clip file or directory")->required();
    s_ann->add_option("--out", ann_args.out, "Manifest (JSON Lines)")->required();
    s_ann->add_option("--iterations", ann_args.iterations, "Prediction unrolls")->check(CLI::Range(1, 100));
    s_ann->add_option("--buckets", ann_args.buckets, "Number of speed buckets")->check(CLI::Range(1, 1000));
    s_ann->add_option("--window", ann_args.window, "Scan window in seconds (0: detector's)");
    s_ann->add_option("--stride", ann_args.stride, "Scan stride in seconds (0: window/4)");

    EvalArgs eval_args;
    auto* s_eval = app.add_subcommand("eval", "Score predictions against ground truth");
    s_eval->require_subcommand(1);
    const auto add_eval_opts = [&](CLI::App* sub) {
        sub->add_option("--pred", eval_args.pred, "Predictions")->required();
        sub->add_option("--gt", eval_args.gt, "Ground truth")->required();
        sub->add_option("--out", eval_args.out, "Report JSON");
    };
    auto* s_eval_speed = s_eval->add_subcommand("speed", "Log-space speed metrics");
    add_eval_opts(s_eval_speed);
    auto* s_eval_changes = s_eval->add_subcommand("changes", "Window-level change detection scores");
    add_eval_opts(s_eval_changes);
    auto* s_eval_events = s_eval->add_subcommand("events", "Event-level change detection F1");
    add_eval_opts(s_eval_events);
    s_eval_events->add_option("--tolerance", eval_args.tolerance, "Match tolerance in seconds");

    BlurArgs blur_args;
    auto* s_blur = app.add_subcommand("blur-synth", "Make motion-blurred low-rate inputs with sharp targets");
    s_blur->add_option("--input", blur_args.input, "Clip file or directory")->required();
    s_blur->add_option("--window", blur_args.window, "Frames averaged per output frame")->check(CLI::Range(1, 100000));
    s_blur->add_option("--stride", blur_args.stride, "Frame step between outputs")->check(CLI::Range(1, 100000));
    s_blur->add_option("--out", blur_args.out, "Output directory")->required();

    std::string replay_path;
    auto* s_replay = app.add_subcommand("replay", "Re-run the resolved configuration of a run manifest");
    s_replay->add_option("--manifest", replay_path, "Run manifest")->required();

    try {
        std::vector<std::string> rev(raw_args.rbegin(), raw_args.rend());
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        const CLI::App* target = &app;
        while (!target->get_subcommands().empty()) target = target->get_subcommands().front();
        out << target->help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << kToolVersion << "\n";
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    std::vector<CLI::App*> chain;
    for (CLI::App* level = &app; !level->get_subcommands().empty();) {
        level = level->get_subcommands().front();
        chain.push_back(level);
    }
    std::string command;
    for (CLI::App* c : chain) {
        command += (command.empty() ? "" : " ") + c->get_name();
    }

    if (chain.front() == s_replay) {
        try {
            const json m = read_json(replay_path);
            std::vector<std::string> args{"--run-manifest", with_suffix(replay_path, ".replay.json").string()};
            for (const auto& a : m.at("args")) {
                args.push_back(a.get<std::string>());
            }
            return run(args, out, err);
        } catch (const std::exception& e) {
            err << "error: " << e.what() << "\n";
            return kExitFailure;
        }
    }

    json resolved;
    const std::vector<std::string> args = resolved_args(app, chain, resolved);
    std::string primary_out;
    CLI::App* leaf = chain.back();
    if (leaf->get_option_no_throw("--out") && leaf->get_option("--out")->count() > 0) {
        primary_out = leaf->get_option("--out")->as<std::string>();
    }
    fs::path manifest_path = g.run_manifest;
    if (manifest_path.empty()) {
        if (!primary_out.empty()) {
            fs::path o = primary_out;
            if (o.filename().empty()) o = o.parent_path();
            manifest_path = o.string() + ".run.json";
        } else {
            std::string name = command;
            std::replace(name.begin(), name.end(), ' ', '-');
            manifest_path = "chronoscope-" + name + ".run.json";
        }
    }

    json manifest = {{"subcommand", command},
                     {"args", args},
                     {"resolved", resolved},
                     {"seed", g.seed},
                     {"threads", g.threads},
                     {"tool_version", std::string(kToolVersion)},
                     {"started_at", iso_now()}};
    int code = kExitOk;
    Outputs outputs;
    try {
        if (leaf == s_synth) outputs = cmd_synth(synth, g, out);
        else if (leaf == s_detect) outputs = cmd_detect(detect_args, g, out);
        else if (leaf == s_train_est) outputs = cmd_train_estimator(train_args, g, out);
        else if (leaf == s_train_det) outputs = cmd_train_detector(train_args, g, out);
        else if (leaf == s_est) outputs = cmd_estimate(est_args, g, out);
        else if (leaf == s_ann) outputs = cmd_annotate(ann_args, g, out);
        else if (leaf == s_eval_speed) outputs = cmd_eval_speed(eval_args, g, out);
        else if (leaf == s_eval_changes) outputs = cmd_eval_changes(eval_args, g, out);
        else if (leaf == s_eval_events) outputs = cmd_eval_events(eval_args, g, out);
        else if (leaf == s_blur) outputs = cmd_blur(blur_args, g, out);
        manifest["status"] = "ok";
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        manifest["status"] = "error";
        manifest["error"] = e.what();
        code = kExitFailure;
    }
    manifest["exit_code"] = code;
    manifest["outputs"] = outputs;
    manifest["finished_at"] = iso_now();
    try {
        if (!manifest_path.parent_path().empty()) {
            fs::create_directories(manifest_path.parent_path());
        }
        write_json(manifest, manifest_path);
    } catch (const std::exception& e) {
        err << "error: could not write run manifest: " << e.what() << "\n";
        code = kExitFailure;
    }
    return code;
}

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace chronoscope::cli
