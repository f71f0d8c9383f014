#pragma once

#include "chronoscope/media.hpp"
#include "chronoscope/media_io.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace chronoscope {

enum class SceneKind { bouncing_ball, oscillator, translating_gradient };

std::string_view to_string(SceneKind kind);
SceneKind scene_kind_from_string(std::string_view name);

/// A moving-shape scene. physical_rate is in cycles per content second for
/// the oscillator and pixels per content second for the other kinds.
struct SceneSpec {
    SceneKind kind = SceneKind::oscillator;
    double physical_rate = 1.0;
    int width = 64;
    int height = 64;
    double duration_s = 1.0;
    std::uint64_t seed = 0;
};

struct ToneSpec {
    double base_frequency = 440.0;
    double amplitude = 0.5;
};

/// Renders video and audio under a playback-speed profile.
///
/// Within a segment of speed s the scene advances s content seconds per
/// playback second, so per-frame motion scales by s and the tone sounds at
/// base_frequency * s. The tone phase is continuous across segment changes.
/// Pixels and samples are returned on the storage grid (u8 / i16), so writing
/// and reading the clip back is lossless.
Clip render_clip(const SceneSpec& scene, const ToneSpec& tone, const SpeedProfile& profile, double fps,
                 double sample_rate);

/// Nominal physical rate for a kind at a given resolution; speed 1.0 then
/// moves the object roughly 1.2 px per frame at 30 fps.
double nominal_rate(SceneKind kind, int width, int height);

struct DatasetSpec {
    std::size_t n_clips = 10;
    double speed_lo = 0.01;
    double speed_hi = 1.0;
    double change_fraction = 0.0;
    std::uint64_t seed = 0;
    double duration_s = 10.0;
    double fps = 30.0;
    double sample_rate = 16000.0;
    int width = 64;
    int height = 64;
    std::vector<SceneKind> kinds{SceneKind::bouncing_ball, SceneKind::oscillator, SceneKind::translating_gradient};
    /// Minimum speed ratio across a change point.
    double min_step_ratio = 1.3;
};

struct GeneratedClip {
    Clip clip;
    Sidecar truth;
};

/// Clip i of a dataset, generated in memory. Each clip draws from its own
/// seeded stream, so clips are independent of each other and of thread count.
GeneratedClip generate_clip(const DatasetSpec& spec, std::size_t index);

/// Whether clip i of the dataset gets a two-segment profile. Exactly
/// round(change_fraction * n_clips) clips do, spread evenly over the indices.
bool has_change(const DatasetSpec& spec, std::size_t index);

struct DatasetEntry {
    std::string clip_id;
    std::filesystem::path clip_path;
    std::filesystem::path sidecar_path;
    std::size_t n_changes = 0;
};

struct DatasetManifest {
    DatasetSpec spec;
    std::vector<DatasetEntry> entries;
};

/// Writes clip_NNNN.chrn + clip_NNNN.json per clip and dataset.json.
DatasetManifest make_dataset(const DatasetSpec& spec, const std::filesystem::path& out_dir, unsigned threads = 1);

/// Clip files (*.chrn and PNG directories) below dir, sorted by name.
std::vector<std::filesystem::path> list_clip_sources(const std::filesystem::path& dir);

}  // namespace chronoscope
