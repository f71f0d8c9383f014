#include "chronoscope/synth.hpp"

#include "chronoscope/error.hpp"
#include "chronoscope/parallel.hpp"
#include "chronoscope/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace chronoscope {

namespace {

constexpr double kTwoPi = 6.283185307179586;
constexpr double kBackground = 0.15;
constexpr double kForeground = 0.85;

// Reflects p into [lo, hi] as if bouncing off both walls.
double fold(double p, double lo, double hi) {
    const double span = hi - lo;
    if (span <= 0.0) {
        return lo;
    }
    double m = std::fmod(p - lo, 2.0 * span);
    if (m < 0.0) {
        m += 2.0 * span;
    }
    return lo + (m <= span ? m : 2.0 * span - m);
}

// Anti-aliased disk: per-pixel coverage falls off linearly over one pixel
// around the rim, so sub-pixel displacements still change pixel values.
void draw_disk(Image& img, int width, int height, double cx, double cy, double radius) {
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - radius - 1.0)));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(cx + radius + 1.0)));
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - radius - 1.0)));
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(cy + radius + 1.0)));
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const double dx = x + 0.5 - cx;
            const double dy = y + 0.5 - cy;
            const double d = std::sqrt(dx * dx + dy * dy);
            const double cover = std::clamp(radius + 0.5 - d, 0.0, 1.0);
            if (cover > 0.0) {
                double& px = img[static_cast<std::size_t>(y) * width + x];
                px = kBackground + (kForeground - kBackground) * cover;
            }
        }
    }
}

struct SceneState {
    double phase0 = 0.0;
    double direction = 1.0;
    double angle = 0.0;
    double start_x = 0.0;
    double start_y = 0.0;
};

SceneState init_scene(const SceneSpec& scene) {
    Rng rng(scene.seed);
    SceneState st;
    st.phase0 = rng.uniform(0.0, kTwoPi);
    st.direction = rng.uniform() < 0.5 ? -1.0 : 1.0;
    st.angle = rng.uniform(0.0, kTwoPi);
    st.start_x = rng.uniform(0.0, 1.0);
    st.start_y = rng.uniform(0.0, 1.0);
    return st;
}

Image render_frame(const SceneSpec& scene, const SceneState& st, double content_t) {
    const int w = scene.width;
    const int h = scene.height;
    const double size = std::min(w, h);
    Image img(static_cast<std::size_t>(w) * h, kBackground);
    switch (scene.kind) {
        case SceneKind::oscillator: {
            // circular orbit: oscillates in x and y with constant speed
            const double orbit = 0.28 * size;
            const double theta = st.phase0 + st.direction * kTwoPi * scene.physical_rate * content_t;
            draw_disk(img, w, h, 0.5 * w + orbit * std::cos(theta), 0.5 * h + orbit * std::sin(theta), 0.1 * size);
            break;
        }
        case SceneKind::bouncing_ball: {
            const double r = 0.1 * size;
            const double travel = scene.physical_rate * content_t;
            const double x = fold(r + st.start_x * (w - 2 * r) + travel * std::cos(st.angle), r, w - r);
            const double y = fold(r + st.start_y * (h - 2 * r) + travel * std::sin(st.angle), r, h - r);
            draw_disk(img, w, h, x, y, r);
            break;
        }
        case SceneKind::translating_gradient: {
            const double wavelength = std::max(w, h);
            const double ca = std::cos(st.angle);
            const double sa = std::sin(st.angle);
            const double shift = scene.physical_rate * content_t;
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    const double u = (x + 0.5) * ca + (y + 0.5) * sa - shift;
                    img[static_cast<std::size_t>(y) * w + x] = 0.5 + 0.35 * std::sin(kTwoPi * u / wavelength + st.phase0);
                }
            }
            break;
        }
    }
    return img;
}

}  // namespace

std::string_view to_string(SceneKind kind) {
    switch (kind) {
        case SceneKind::bouncing_ball: return "bouncing_ball";
        case SceneKind::oscillator: return "oscillator";
        case SceneKind::translating_gradient: return "translating_gradient";
    }
    return "unknown";
}

SceneKind scene_kind_from_string(std::string_view name) {
    if (name == "bouncing_ball") return SceneKind::bouncing_ball;
    if (name == "oscillator") return SceneKind::oscillator;
    if (name == "translating_gradient") return SceneKind::translating_gradient;
    fail(ErrorKind::invalid_argument, "unknown scene kind '" + std::string(name) + "'");
}

Clip render_clip(const SceneSpec& scene, const ToneSpec& tone, const SpeedProfile& profile, double fps,
                 double sample_rate) {
    if (!(scene.physical_rate > 0.0) || !(scene.duration_s > 0.0)) {
        fail(ErrorKind::invalid_argument, "scene needs physical_rate > 0 and duration_s > 0");
    }
    if (scene.width < 16 || scene.height < 16) {
        fail(ErrorKind::invalid_argument, "scene resolution must be at least 16x16");
    }
    if (tone.base_frequency < 50.0 || tone.base_frequency > 4000.0) {
        fail(ErrorKind::invalid_argument, "tone base_frequency must lie in [50, 4000] Hz");
    }
    if (tone.amplitude < 0.0 || tone.amplitude > 1.0) {
        fail(ErrorKind::invalid_argument, "tone amplitude must lie in [0, 1]");
    }
    if (!(fps > 0.0) || !(sample_rate > 0.0)) {
        fail(ErrorKind::invalid_argument, "fps and sample_rate must be positive");
    }
    if (profile.duration_s() < scene.duration_s - 1e-9) {
        fail(ErrorKind::profile, "speed profile ends before the scene duration");
    }

    const SceneState st = init_scene(scene);
    const auto n_frames = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(scene.duration_s * fps + 1e-9)));
    std::vector<Image> frames;
    frames.reserve(n_frames);
    for (std::size_t i = 0; i < n_frames; ++i) {
        frames.push_back(render_frame(scene, st, profile.content_time(static_cast<double>(i) / fps)));
    }

    const auto n_samples = static_cast<std::size_t>(std::floor(scene.duration_s * sample_rate + 1e-9));
    std::vector<double> samples(n_samples);
    double phase = 0.0;
    const auto& segs = profile.segments();
    std::size_t seg = 0;
    for (std::size_t n = 0; n < n_samples; ++n) {
        const double t = static_cast<double>(n) / sample_rate;
        while (seg + 1 < segs.size() && t >= segs[seg].t_end) {
            ++seg;
        }
        samples[n] = tone.amplitude * std::sin(phase);
        phase += kTwoPi * tone.base_frequency * segs[seg].speed / sample_rate;
        if (phase > kTwoPi) {
            phase -= kTwoPi;
        }
    }

    Clip clip{FrameSequence(std::move(frames), scene.width, scene.height, 1, fps),
              AudioTrack(std::move(samples), sample_rate), std::nullopt,
              std::string(to_string(scene.kind)) + "_" + std::to_string(scene.seed)};
    if (segs.size() == 1) {
        clip.true_speed = segs.front().speed;
    }
    return quantize_for_storage(clip);
}

double nominal_rate(SceneKind kind, int width, int height) {
    const double size = std::min(width, height);
    const double px_per_s = 36.0 * size / 64.0;
    if (kind == SceneKind::oscillator) {
        return px_per_s / (kTwoPi * 0.28 * size);
    }
    return px_per_s;
}

bool has_change(const DatasetSpec& spec, std::size_t index) {
    if (spec.n_clips == 0) {
        return false;
    }
    const auto count = static_cast<std::size_t>(std::llround(spec.change_fraction * static_cast<double>(spec.n_clips)));
    return ((index + 1) * count) / spec.n_clips > (index * count) / spec.n_clips;
}

GeneratedClip generate_clip(const DatasetSpec& spec, std::size_t index) {
    if (!(spec.speed_lo > 0.0) || spec.speed_hi < spec.speed_lo) {
        fail(ErrorKind::invalid_argument, "speed range must satisfy 0 < lo <= hi");
    }
    if (spec.change_fraction < 0.0 || spec.change_fraction > 1.0) {
        fail(ErrorKind::invalid_argument, "change_fraction must lie in [0, 1]");
    }
    if (spec.kinds.empty()) {
        fail(ErrorKind::invalid_argument, "dataset needs at least one scene kind");
    }
    Rng rng = Rng::stream(spec.seed, index);
    const SceneKind kind = spec.kinds[rng.below(spec.kinds.size())];
    const double rate = nominal_rate(kind, spec.width, spec.height) * rng.uniform(0.9, 1.1);

    const double s1 = rng.log_uniform(spec.speed_lo, spec.speed_hi);
    std::vector<SpeedSegment> segs;
    if (has_change(spec, index)) {
        const double lo = std::log(spec.speed_lo);
        const double hi = std::log(spec.speed_hi);
        const double gap = std::log(spec.min_step_ratio);
        if (hi - lo < gap) {
            fail(ErrorKind::invalid_argument, "speed range is too narrow for a change of ratio >= " +
                                                  std::to_string(spec.min_step_ratio));
        }
        double first = std::log(s1);
        double below = std::max(0.0, first - gap - lo);
        double above = std::max(0.0, hi - first - gap);
        while (below + above <= 0.0) {
            first = rng.uniform(lo, hi);
            below = std::max(0.0, first - gap - lo);
            above = std::max(0.0, hi - first - gap);
        }
        const double u = rng.uniform(0.0, below + above);
        const double second = u < below ? lo + u : first + gap + (u - below);
        const double t_change = rng.uniform(0.3, 0.7) * spec.duration_s;
        segs.push_back({0.0, t_change, std::exp(first)});
        segs.push_back({t_change, spec.duration_s, std::exp(second)});
    } else {
        segs.push_back({0.0, spec.duration_s, s1});
    }

    // keep the tone inside the 50..4000 Hz analysis band across the speed range when possible
    const double f_lo = std::clamp(100.0 / spec.speed_lo, 50.0, 4000.0);
    const double f_hi = std::clamp(3000.0 / spec.speed_hi, 50.0, 4000.0);
    const double base = f_lo <= f_hi ? rng.log_uniform(f_lo, f_hi) : std::sqrt(f_lo * f_hi);

    SceneSpec scene{kind, rate, spec.width, spec.height, spec.duration_s, rng.next_u64()};
    ToneSpec tone{base, 0.5};
    SpeedProfile profile(std::move(segs));
    Clip clip = render_clip(scene, tone, profile, spec.fps, spec.sample_rate);

    char name[32];
    std::snprintf(name, sizeof(name), "clip_%04zu", index);
    clip.clip_id = name;

    nlohmann::json scene_json = {
        {"kind", std::string(to_string(kind))},
        {"physical_rate", rate},
        {"width", spec.width},
        {"height", spec.height},
        {"duration_s", spec.duration_s},
        {"fps", spec.fps},
        {"sample_rate", spec.sample_rate},
        {"tone_hz", base},
    };
    Sidecar truth{clip.clip_id, profile, std::move(scene_json), scene.seed};
    return GeneratedClip{std::move(clip), std::move(truth)};
}

DatasetManifest make_dataset(const DatasetSpec& spec, const std::filesystem::path& out_dir, unsigned threads) {
    if (spec.n_clips < 1) {
        fail(ErrorKind::invalid_argument, "n_clips must be >= 1");
    }
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec || !std::filesystem::is_directory(out_dir)) {
        fail(ErrorKind::io, "cannot create output directory " + out_dir.string());
    }
    DatasetManifest manifest{spec, std::vector<DatasetEntry>(spec.n_clips)};
    parallel_for(spec.n_clips, threads, [&](std::size_t i) {
        GeneratedClip g = generate_clip(spec, i);
        const auto clip_path = out_dir / (g.clip.clip_id + ".chrn");
        const auto side_path = out_dir / (g.clip.clip_id + ".json");
        Clip to_write = g.clip;
        to_write.true_speed.reset();
        write_clip(to_write, clip_path);
        write_sidecar(g.truth, side_path);
        manifest.entries[i] = DatasetEntry{g.clip.clip_id, clip_path, side_path,
                                           g.truth.profile.segments().size() - 1};
    });

    nlohmann::json clips = nlohmann::json::array();
    for (const DatasetEntry& e : manifest.entries) {
        clips.push_back({{"clip_id", e.clip_id},
                         {"file", e.clip_path.filename().string()},
                         {"sidecar", e.sidecar_path.filename().string()},
                         {"n_changes", e.n_changes}});
    }
    nlohmann::json kinds = nlohmann::json::array();
    for (SceneKind k : spec.kinds) {
        kinds.push_back(std::string(to_string(k)));
    }
    nlohmann::json j = {
        {"n_clips", spec.n_clips},
        {"speed_range", {spec.speed_lo, spec.speed_hi}},
        {"change_fraction", spec.change_fraction},
        {"seed", spec.seed},
        {"duration_s", spec.duration_s},
        {"fps", spec.fps},
        {"sample_rate", spec.sample_rate},
        {"width", spec.width},
        {"height", spec.height},
        {"kinds", kinds},
        {"clips", clips},
    };
    write_text_file(out_dir / "dataset.json", j.dump(2) + "\n");
    return manifest;
}

std::vector<std::filesystem::path> list_clip_sources(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> out;
    if (!std::filesystem::is_directory(dir)) {
        fail(ErrorKind::io, "not a directory: " + dir.string());
    }
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".chrn") {
            out.push_back(e.path());
        } else if (e.is_directory() && std::filesystem::exists(e.path() / "meta.txt")) {
            out.push_back(e.path());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace chronoscope
