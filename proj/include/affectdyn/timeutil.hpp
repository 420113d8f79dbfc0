#pragma once

#include <cstdint>
#include <string>

namespace affectdyn {

// Epoch instants are UTC milliseconds. RFC 3339 strings are the only
// accepted wire form; timestamps without an explicit offset are rejected.

struct ParsedInstant {
    std::int64_t epoch_ms = 0;
};

// Parses "YYYY-MM-DDTHH:MM:SS[.frac](Z|+HH:MM|-HH:MM)". Throws
// std::invalid_argument with a short reason on anything else, including a
// missing timezone. Fractional digits beyond milliseconds are dropped.
std::int64_t parse_rfc3339_ms(const std::string& s);

// Formats as UTC with a trailing "Z"; milliseconds printed only when nonzero.
std::string format_rfc3339_ms(std::int64_t epoch_ms);

// Days since 1970-01-01 for the UTC calendar date containing the instant.
std::int64_t utc_day_number(std::int64_t epoch_ms);

} // namespace affectdyn
