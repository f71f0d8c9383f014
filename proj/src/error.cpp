#include "chronoscope/error.hpp"

namespace chronoscope {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::invalid_argument: return "invalid-argument";
        case ErrorKind::invalid_factor: return "invalid-factor";
        case ErrorKind::insufficient_length: return "insufficient-length";
        case ErrorKind::format: return "format";
        case ErrorKind::unsupported_channels: return "unsupported-channels";
        case ErrorKind::profile: return "profile";
        case ErrorKind::io: return "io";
        case ErrorKind::insufficient_audio: return "insufficient-audio";
        case ErrorKind::invalid_band: return "invalid-band";
        case ErrorKind::insufficient_track: return "insufficient-track";
        case ErrorKind::missing_audio: return "missing-audio";
        case ErrorKind::shape: return "shape";
        case ErrorKind::label: return "label";
        case ErrorKind::degenerate_data: return "degenerate-data";
        case ErrorKind::empty_set: return "empty-set";
        case ErrorKind::domain: return "domain";
        case ErrorKind::undefined_correlation: return "undefined-correlation";
    }
    return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + " error: " + message), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace chronoscope
