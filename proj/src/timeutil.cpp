#include "affectdyn/timeutil.hpp"

#include <cstdio>
#include <stdexcept>

namespace affectdyn {

namespace {

// Howard Hinnant's civil-from-days / days-from-civil arithmetic.
std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, unsigned& m, unsigned& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const int yr = static_cast<int>(yoe) + static_cast<int>(era) * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp + (mp < 10 ? 3 : -9);
    y = yr + (m <= 2);
}

bool is_leap(int y) {
    return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
}

unsigned days_in_month(int y, unsigned m) {
    static const unsigned lengths[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (m == 2 && is_leap(y)) return 29;
    return lengths[m - 1];
}

[[noreturn]] void bad(const std::string& s, const char* why) {
    throw std::invalid_argument("invalid RFC 3339 timestamp \"" + s + "\": " + why);
}

int digits(const std::string& s, size_t pos, size_t n) {
    int v = 0;
    for (size_t i = pos; i < pos + n; ++i) {
        if (i >= s.size() || s[i] < '0' || s[i] > '9') return -1;
        v = v * 10 + (s[i] - '0');
    }
    return v;
}

} // namespace

std::int64_t parse_rfc3339_ms(const std::string& s) {
    // Fixed layout up to the optional fraction: YYYY-MM-DDTHH:MM:SS
    if (s.size() < 20) bad(s, "too short");
    const int year = digits(s, 0, 4);
    if (year < 0 || s[4] != '-') bad(s, "malformed date");
    const int month = digits(s, 5, 2);
    if (month < 1 || month > 12 || s[7] != '-') bad(s, "malformed month");
    const int day = digits(s, 8, 2);
    if (day < 1) bad(s, "malformed day");
    if (static_cast<unsigned>(day) > days_in_month(year, static_cast<unsigned>(month)))
        bad(s, "day out of range for month");
    if (s[10] != 'T' && s[10] != 't') bad(s, "expected 'T' separator");
    const int hour = digits(s, 11, 2);
    const int minute = digits(s, 14, 2);
    const int second = digits(s, 17, 2);
    if (hour < 0 || hour > 23 || s[13] != ':') bad(s, "malformed hour");
    if (minute < 0 || minute > 59 || s[16] != ':') bad(s, "malformed minute");
    if (second < 0 || second > 60) bad(s, "malformed second"); // 60 admits leap seconds
    size_t pos = 19;

    std::int64_t ms = 0;
    if (pos < s.size() && s[pos] == '.') {
        ++pos;
        size_t start = pos;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
        if (pos == start) bad(s, "empty fraction");
        for (size_t i = start; i < start + 3; ++i) {
            ms = ms * 10 + (i < pos ? s[i] - '0' : 0);
        }
    }

    if (pos >= s.size()) bad(s, "missing timezone offset");
    std::int64_t offset_min = 0;
    if (s[pos] == 'Z' || s[pos] == 'z') {
        ++pos;
    } else if (s[pos] == '+' || s[pos] == '-') {
        const bool neg = s[pos] == '-';
        const int oh = digits(s, pos + 1, 2);
        const int om = digits(s, pos + 4, 2);
        if (oh < 0 || oh > 23 || om < 0 || om > 59 || pos + 3 >= s.size() || s[pos + 3] != ':')
            bad(s, "malformed timezone offset");
        offset_min = (neg ? -1 : 1) * (oh * 60 + om);
        pos += 6;
    } else {
        bad(s, "missing timezone offset");
    }
    if (pos != s.size()) bad(s, "trailing characters");

    const std::int64_t days = days_from_civil(year, static_cast<unsigned>(month),
                                              static_cast<unsigned>(day));
    std::int64_t secs = days * 86400 + hour * 3600 + minute * 60 + second;
    secs -= offset_min * 60; // normalize to UTC
    return secs * 1000 + ms;
}

std::string format_rfc3339_ms(std::int64_t epoch_ms) {
    std::int64_t secs = epoch_ms / 1000;
    std::int64_t ms = epoch_ms % 1000;
    if (ms < 0) {
        ms += 1000;
        secs -= 1;
    }
    std::int64_t days = secs / 86400;
    std::int64_t rem = secs % 86400;
    if (rem < 0) {
        rem += 86400;
        days -= 1;
    }
    int y;
    unsigned m, d;
    civil_from_days(days, y, m, d);
    char buf[40];
    if (ms != 0) {
        std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02lld:%02lld:%02lld.%03lldZ", y, m, d,
                      static_cast<long long>(rem / 3600), static_cast<long long>((rem / 60) % 60),
                      static_cast<long long>(rem % 60), static_cast<long long>(ms));
    } else {
        std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02lld:%02lld:%02lldZ", y, m, d,
                      static_cast<long long>(rem / 3600), static_cast<long long>((rem / 60) % 60),
                      static_cast<long long>(rem % 60));
    }
    return buf;
}

std::int64_t utc_day_number(std::int64_t epoch_ms) {
    std::int64_t secs = epoch_ms / 1000;
    if (epoch_ms % 1000 < 0) secs -= 1;
    std::int64_t days = secs / 86400;
    if (secs % 86400 < 0) days -= 1;
    return days;
}

} // namespace affectdyn
