#include "chronoscope/media_io.hpp"

#include "chronoscope/error.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace chronoscope {

namespace {

static_assert(std::endian::native == std::endian::little, "clip container I/O assumes a little-endian host");

class ByteWriter {
public:
    template <typename T>
    void put(T value) {
        char buf[sizeof(T)];
        std::memcpy(buf, &value, sizeof(T));
        out_.append(buf, sizeof(T));
    }
    void bytes(const char* data, std::size_t n) { out_.append(data, n); }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class ByteReader {
public:
    explicit ByteReader(const std::string& in) : in_(in) {}

    template <typename T>
    T get(const char* field) {
        if (pos_ + sizeof(T) > in_.size()) {
            fail(ErrorKind::format, std::string("truncated data while reading field '") + field + "'");
        }
        T value;
        std::memcpy(&value, in_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }
    const unsigned char* take(std::size_t n, const char* field) {
        if (n > in_.size() - pos_) {
            fail(ErrorKind::format, std::string("truncated payload in '") + field + "'");
        }
        const auto* p = reinterpret_cast<const unsigned char*>(in_.data() + pos_);
        pos_ += n;
        return p;
    }
    std::size_t remaining() const { return in_.size() - pos_; }

private:
    const std::string& in_;
    std::size_t pos_ = 0;
};

std::uint8_t encode_pixel(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::int16_t encode_sample(double v) {
    return static_cast<std::int16_t>(std::lround(std::clamp(v, -1.0, 1.0) * 32767.0));
}

double decode_sample(std::int16_t v) {
    return std::max(-1.0, static_cast<double>(v) / 32767.0);
}

}  // namespace

double quantize_pixel(double v) { return static_cast<double>(encode_pixel(v)) / 255.0; }

double quantize_sample(double v) { return decode_sample(encode_sample(v)); }

Clip quantize_for_storage(const Clip& clip) {
    std::vector<Image> frames = clip.video.frames();
    for (Image& f : frames) {
        for (double& v : f) {
            v = quantize_pixel(v);
        }
    }
    // the container stores fps as f32
    const double fps = static_cast<double>(static_cast<float>(clip.video.fps()));
    Clip out{FrameSequence(std::move(frames), clip.video.width(), clip.video.height(), clip.video.channels(), fps),
             std::nullopt, clip.true_speed, clip.clip_id};
    if (clip.audio) {
        std::vector<double> s = clip.audio->samples();
        for (double& v : s) {
            v = quantize_sample(v);
        }
        out.audio = AudioTrack(std::move(s), std::round(clip.audio->sample_rate()));
    }
    return out;
}

std::string encode_clip(const Clip& clip) {
    const FrameSequence& v = clip.video;
    if (v.width() > 0xFFFF || v.height() > 0xFFFF) {
        fail(ErrorKind::format, "width/height exceed the u16 header fields");
    }
    ByteWriter w;
    w.bytes("CHRN", 4);
    w.put<std::uint16_t>(kClipFormatVersion);
    w.put<std::uint16_t>(static_cast<std::uint16_t>(v.width()));
    w.put<std::uint16_t>(static_cast<std::uint16_t>(v.height()));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(v.channels()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(v.size()));
    w.put<float>(static_cast<float>(v.fps()));
    w.put<std::uint8_t>(clip.audio ? 1 : 0);
    std::string pixels;
    pixels.reserve(v.size() * v.pixels_per_frame());
    for (const Image& f : v.frames()) {
        for (double p : f) {
            pixels.push_back(static_cast<char>(encode_pixel(p)));
        }
    }
    w.bytes(pixels.data(), pixels.size());
    if (clip.audio) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(std::lround(clip.audio->sample_rate())));
        w.put<std::uint64_t>(clip.audio->size());
        for (double s : clip.audio->samples()) {
            w.put<std::int16_t>(encode_sample(s));
        }
    }
    return w.take();
}

Clip decode_clip(const std::string& bytes, const std::string& clip_id) {
    ByteReader r(bytes);
    const unsigned char* magic = r.take(4, "magic");
    if (std::memcmp(magic, "CHRN", 4) != 0) {
        fail(ErrorKind::format, "bad magic: expected 'CHRN'");
    }
    const auto version = r.get<std::uint16_t>("version");
    if (version != kClipFormatVersion) {
        fail(ErrorKind::format, "unsupported version " + std::to_string(version));
    }
    const auto width = r.get<std::uint16_t>("width");
    const auto height = r.get<std::uint16_t>("height");
    const auto channels = r.get<std::uint8_t>("channels");
    const auto frame_count = r.get<std::uint32_t>("frame_count");
    const auto fps = r.get<float>("fps");
    const auto audio_flag = r.get<std::uint8_t>("audio_flag");
    if (width == 0 || height == 0) {
        fail(ErrorKind::format, "width/height must be non-zero");
    }
    if (channels != 1 && channels != 3) {
        fail(ErrorKind::unsupported_channels, "channels field holds " + std::to_string(channels) + ", expected 1 or 3");
    }
    if (frame_count == 0) {
        fail(ErrorKind::format, "frame_count must be non-zero");
    }
    if (!(fps > 0.0f) || !std::isfinite(fps)) {
        fail(ErrorKind::format, "fps must be positive");
    }
    if (audio_flag > 1) {
        fail(ErrorKind::format, "audio_flag must be 0 or 1");
    }
    const std::size_t per_frame = static_cast<std::size_t>(width) * height * channels;
    const unsigned char* px = r.take(per_frame * frame_count, "frames");
    std::vector<Image> frames(frame_count, Image(per_frame));
    for (std::size_t f = 0; f < frame_count; ++f) {
        for (std::size_t p = 0; p < per_frame; ++p) {
            frames[f][p] = static_cast<double>(px[f * per_frame + p]) / 255.0;
        }
    }
    Clip clip{FrameSequence(std::move(frames), width, height, channels, static_cast<double>(fps)), std::nullopt,
              std::nullopt, clip_id};
    if (audio_flag == 1) {
        const auto sample_rate = r.get<std::uint32_t>("sample_rate");
        const auto count = r.get<std::uint64_t>("sample_count");
        if (sample_rate == 0) {
            fail(ErrorKind::format, "sample_rate must be non-zero");
        }
        if (count > r.remaining() / 2) {
            fail(ErrorKind::format, "truncated payload in 'audio samples'");
        }
        const unsigned char* raw = r.take(count * 2, "audio samples");
        std::vector<double> samples(count);
        for (std::size_t i = 0; i < count; ++i) {
            std::int16_t s;
            std::memcpy(&s, raw + 2 * i, 2);
            samples[i] = decode_sample(s);
        }
        clip.audio = AudioTrack(std::move(samples), sample_rate);
    }
    if (r.remaining() != 0) {
        fail(ErrorKind::format, std::to_string(r.remaining()) + " trailing bytes after payload");
    }
    return clip;
}

std::string read_binary_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorKind::io, "cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        fail(ErrorKind::io, "cannot write " + path.string());
    }
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) {
        fail(ErrorKind::io, "write failed for " + path.string());
    }
}

fs::path sidecar_path(const fs::path& clip_path) {
    fs::path p = clip_path;
    if (fs::is_directory(p)) {
        return p / "truth.json";
    }
    return p.replace_extension(".json");
}

Clip read_clip(const fs::path& path) {
    if (!fs::exists(path)) {
        fail(ErrorKind::io, "no such file: " + path.string());
    }
    Clip clip = fs::is_directory(path) ? read_png_dir(path) : decode_clip(read_binary_file(path), path.stem().string());
    const fs::path side = sidecar_path(path);
    if (fs::exists(side)) {
        const Sidecar sc = read_sidecar(side);
        if (sc.profile.segments().size() == 1) {
            clip.true_speed = sc.profile.segments().front().speed;
        }
    }
    return clip;
}

void write_clip(const Clip& clip, const fs::path& path) {
    validate(clip);
    write_text_file(path, encode_clip(clip));
    if (clip.true_speed) {
        Sidecar sc{clip.clip_id, SpeedProfile::constant(*clip.true_speed, clip.video.duration_s()), nullptr,
                   std::nullopt};
        write_sidecar(sc, sidecar_path(path));
    }
}

// ---------------------------------------------------------------- WAV

AudioTrack read_wav(const fs::path& path) {
    const std::string bytes = read_binary_file(path);
    ByteReader r(bytes);
    const unsigned char* riff = r.take(4, "RIFF");
    if (std::memcmp(riff, "RIFF", 4) != 0) {
        fail(ErrorKind::format, "not a RIFF file: " + path.string());
    }
    r.get<std::uint32_t>("riff size");
    if (std::memcmp(r.take(4, "WAVE"), "WAVE", 4) != 0) {
        fail(ErrorKind::format, "RIFF form is not WAVE");
    }
    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    bool have_fmt = false;
    while (r.remaining() >= 8) {
        const unsigned char* id = r.take(4, "chunk id");
        const auto size = r.get<std::uint32_t>("chunk size");
        if (std::memcmp(id, "fmt ", 4) == 0) {
            const unsigned char* body = r.take(size, "fmt chunk");
            if (size < 16) {
                fail(ErrorKind::format, "fmt chunk too short");
            }
            std::memcpy(&format, body, 2);
            std::memcpy(&channels, body + 2, 2);
            std::memcpy(&rate, body + 4, 4);
            std::memcpy(&bits, body + 14, 2);
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            if (!have_fmt) {
                fail(ErrorKind::format, "data chunk before fmt chunk");
            }
            if (format != 1 || bits != 16) {
                fail(ErrorKind::format, "only PCM 16-bit WAV is supported");
            }
            if (channels == 0 || rate == 0) {
                fail(ErrorKind::format, "WAV declares zero channels or zero sample rate");
            }
            const unsigned char* raw = r.take(size, "data chunk");
            const std::size_t frames = size / (2u * channels);
            std::vector<double> samples(frames);
            for (std::size_t i = 0; i < frames; ++i) {
                double acc = 0.0;
                for (std::size_t c = 0; c < channels; ++c) {
                    std::int16_t s;
                    std::memcpy(&s, raw + 2 * (i * channels + c), 2);
                    acc += decode_sample(s);
                }
                samples[i] = acc / channels;
            }
            return AudioTrack(std::move(samples), rate);
        } else {
            r.take(size + (size & 1u), "chunk body");
        }
    }
    fail(ErrorKind::format, "WAV has no data chunk");
}

void write_wav(const AudioTrack& audio, const fs::path& path) {
    const auto rate = static_cast<std::uint32_t>(std::lround(audio.sample_rate()));
    const auto data_size = static_cast<std::uint32_t>(audio.size() * 2);
    ByteWriter w;
    w.bytes("RIFF", 4);
    w.put<std::uint32_t>(36 + data_size);
    w.bytes("WAVE", 4);
    w.bytes("fmt ", 4);
    w.put<std::uint32_t>(16);
    w.put<std::uint16_t>(1);
    w.put<std::uint16_t>(1);
    w.put<std::uint32_t>(rate);
    w.put<std::uint32_t>(rate * 2);
    w.put<std::uint16_t>(2);
    w.put<std::uint16_t>(16);
    w.bytes("data", 4);
    w.put<std::uint32_t>(data_size);
    for (double s : audio.samples()) {
        w.put<std::int16_t>(encode_sample(s));
    }
    write_text_file(path, w.take());
}

// ---------------------------------------------------------------- PNG directories

namespace {

std::map<std::string, std::string> read_key_values(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        fail(ErrorKind::io, "cannot open " + path.string());
    }
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            fail(ErrorKind::format, "metadata line without '=': " + line);
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

long frame_number(const fs::path& p) {
    const std::string stem = p.stem().string();
    std::string digits;
    for (char c : stem) {
        if (c >= '0' && c <= '9') {
            digits.push_back(c);
        }
    }
    return digits.empty() ? -1 : std::stol(digits);
}

}  // namespace

Clip read_png_dir(const fs::path& dir) {
    const fs::path meta = dir / "meta.txt";
    if (!fs::exists(meta)) {
        fail(ErrorKind::format, "PNG source " + dir.string() + " lacks meta.txt");
    }
    const auto kv = read_key_values(meta);
    auto field = [&](const char* key) -> double {
        const auto it = kv.find(key);
        if (it == kv.end()) {
            fail(ErrorKind::format, std::string("meta.txt is missing '") + key + "'");
        }
        try {
            return std::stod(it->second);
        } catch (const std::exception&) {
            fail(ErrorKind::format, std::string("meta.txt field '") + key + "' is not numeric");
        }
    };
    const int width = static_cast<int>(field("width"));
    const int height = static_cast<int>(field("height"));
    const double fps = field("fps");

    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".png") {
            files.push_back(e.path());
        }
    }
    if (files.empty()) {
        fail(ErrorKind::format, "PNG source " + dir.string() + " holds no .png frames");
    }
    std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
        const long na = frame_number(a), nb = frame_number(b);
        return na != nb ? na < nb : a < b;
    });

    std::vector<Image> frames;
    int channels = 0;
    for (const fs::path& f : files) {
        png_image img;
        std::memset(&img, 0, sizeof(img));
        img.version = PNG_IMAGE_VERSION;
        if (!png_image_begin_read_from_file(&img, f.string().c_str())) {
            fail(ErrorKind::format, "cannot decode " + f.string() + ": " + img.message);
        }
        const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
        const int ch = color ? 3 : 1;
        if (channels == 0) {
            channels = ch;
        }
        img.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
        if (static_cast<int>(img.width) != width || static_cast<int>(img.height) != height) {
            png_image_free(&img);
            fail(ErrorKind::format, f.string() + " does not match meta.txt width/height");
        }
        std::vector<unsigned char> buf(PNG_IMAGE_SIZE(img));
        if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
            fail(ErrorKind::format, "cannot decode " + f.string() + ": " + img.message);
        }
        Image frame(buf.size());
        std::transform(buf.begin(), buf.end(), frame.begin(), [](unsigned char c) { return c / 255.0; });
        frames.push_back(std::move(frame));
    }
    Clip clip{FrameSequence(std::move(frames), width, height, channels, fps), std::nullopt, std::nullopt,
              dir.filename().string()};
    if (clip.clip_id.empty()) {
        clip.clip_id = dir.parent_path().filename().string();
    }
    const fs::path wav = dir / "audio.wav";
    if (fs::exists(wav)) {
        clip.audio = read_wav(wav);
    }
    return clip;
}

void write_png_dir(const FrameSequence& video, const fs::path& dir) {
    fs::create_directories(dir);
    for (std::size_t i = 0; i < video.size(); ++i) {
        png_image img;
        std::memset(&img, 0, sizeof(img));
        img.version = PNG_IMAGE_VERSION;
        img.width = static_cast<png_uint_32>(video.width());
        img.height = static_cast<png_uint_32>(video.height());
        img.format = video.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
        std::vector<unsigned char> buf(video.pixels_per_frame());
        const Image& f = video.frame(i);
        std::transform(f.begin(), f.end(), buf.begin(), encode_pixel);
        char name[32];
        std::snprintf(name, sizeof(name), "%06zu.png", i);
        const fs::path out = dir / name;
        if (!png_image_write_to_file(&img, out.string().c_str(), 0, buf.data(), 0, nullptr)) {
            fail(ErrorKind::io, "cannot write " + out.string() + ": " + img.message);
        }
    }
    std::ostringstream meta;
    meta << "width=" << video.width() << "\nheight=" << video.height() << "\nfps=" << video.fps() << "\n";
    write_text_file(dir / "meta.txt", meta.str());
}

// ---------------------------------------------------------------- sidecars

nlohmann::json to_json(const Sidecar& sidecar) {
    nlohmann::json segs = nlohmann::json::array();
    for (const SpeedSegment& s : sidecar.profile.segments()) {
        segs.push_back({{"t_start", s.t_start}, {"t_end", s.t_end}, {"speed", s.speed}});
    }
    nlohmann::json j;
    j["clip_id"] = sidecar.clip_id;
    j["segments"] = std::move(segs);
    j["scene"] = sidecar.scene;
    j["seed"] = sidecar.seed ? nlohmann::json(*sidecar.seed) : nlohmann::json(nullptr);
    return j;
}

Sidecar sidecar_from_json(const nlohmann::json& j) {
    try {
        std::vector<SpeedSegment> segs;
        for (const auto& s : j.at("segments")) {
            segs.push_back({s.at("t_start").get<double>(), s.at("t_end").get<double>(), s.at("speed").get<double>()});
        }
        Sidecar sc{j.at("clip_id").get<std::string>(), SpeedProfile(std::move(segs)),
                   j.value("scene", nlohmann::json(nullptr)), std::nullopt};
        if (j.contains("seed") && !j["seed"].is_null()) {
            sc.seed = j["seed"].get<std::uint64_t>();
        }
        return sc;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::format, std::string("malformed sidecar: ") + e.what());
    }
}

void write_sidecar(const Sidecar& sidecar, const fs::path& path) {
    write_text_file(path, to_json(sidecar).dump(2) + "\n");
}

Sidecar read_sidecar(const fs::path& path) {
    const std::string text = read_binary_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::format, "malformed sidecar " + path.string() + ": " + e.what());
    }
    return sidecar_from_json(j);
}

}  // namespace chronoscope
