#pragma once

#include <cstdint>
#include <string>

namespace carbonfl {

/// Parses a UTC timestamp of the exact form YYYY-MM-DDTHH:00:00Z into
/// hours since the Unix epoch. Rejects anything with nonzero minutes or
/// seconds, so every accepted timestamp is hour-aligned by construction.
/// Throws Error(Errc::schema) on malformed input.
int64_t parse_hour_utc(const std::string& text);

/// Inverse of parse_hour_utc.
std::string format_hour_utc(int64_t epoch_hours);

}  // namespace carbonfl
