#pragma once

#include "chronoscope/media.hpp"

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

namespace chronoscope {

namespace fs = std::filesystem;

// Raw clip container ("CHRN", little-endian):
//   magic[4] version:u16 width:u16 height:u16 channels:u8 frame_count:u32 fps:f32 audio_flag:u8
//   frames: frame-major, row-major, channel-interleaved u8 (round(p*255))
//   audio (if flag): sample_rate:u32 sample_count:u64 samples:i16[]
inline constexpr std::uint16_t kClipFormatVersion = 1;

/// Reads a .chrn file or a PNG frame directory.
///
/// clip_id is the file stem (directory name for PNG sources). When a
/// single-segment ground-truth sidecar (<stem>.json) sits next to the file its
/// speed becomes true_speed.
Clip read_clip(const fs::path& path);

/// Writes the binary container. If the clip carries true_speed, a minimal
/// single-segment sidecar is written alongside.
void write_clip(const Clip& clip, const fs::path& path);

/// Byte-level codecs, exposed for tests and tools.
std::string encode_clip(const Clip& clip);
Clip decode_clip(const std::string& bytes, const std::string& clip_id);

/// Quantizes pixels to the u8 grid and audio to the i16 grid so the clip
/// survives a write/read cycle unchanged.
Clip quantize_for_storage(const Clip& clip);
double quantize_pixel(double v);
double quantize_sample(double v);

AudioTrack read_wav(const fs::path& path);
void write_wav(const AudioTrack& audio, const fs::path& path);

/// Numbered PNG images plus meta.txt (key=value: width, height, fps). An
/// optional audio.wav in the same directory becomes the clip's audio.
Clip read_png_dir(const fs::path& dir);
void write_png_dir(const FrameSequence& video, const fs::path& dir);

/// Per-clip ground truth: {"clip_id", "segments": [{"t_start","t_end","speed"}], "scene", "seed"}.
struct Sidecar {
    std::string clip_id;
    SpeedProfile profile;
    nlohmann::json scene;                // null when unknown
    std::optional<std::uint64_t> seed;
};

fs::path sidecar_path(const fs::path& clip_path);
nlohmann::json to_json(const Sidecar& sidecar);
Sidecar sidecar_from_json(const nlohmann::json& j);
void write_sidecar(const Sidecar& sidecar, const fs::path& path);
Sidecar read_sidecar(const fs::path& path);

/// Writes text atomically enough for our purposes; throws io error on failure.
void write_text_file(const fs::path& path, const std::string& text);
std::string read_binary_file(const fs::path& path);

}  // namespace chronoscope
