#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace chronoscope {

enum class ErrorKind {
    invalid_argument,
    invalid_factor,
    insufficient_length,
    format,
    unsupported_channels,
    profile,
    io,
    insufficient_audio,
    invalid_band,
    insufficient_track,
    missing_audio,
    shape,
    label,
    degenerate_data,
    empty_set,
    domain,
    undefined_correlation,
};

std::string_view to_string(ErrorKind kind);

// Every failure raised by the library carries a kind so callers (and tests)
// can branch on the category without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message);

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace chronoscope
