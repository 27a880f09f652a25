#include "carbonfl/timeutil.hpp"

#include <array>
#include <cstdio>

#include "carbonfl/errors.hpp"

namespace carbonfl {

namespace {

// Days since 1970-01-01 for a proleptic Gregorian civil date.
int64_t days_from_civil(int64_t y, int m, int d) {
    y -= m <= 2;
    const int64_t era = (y >= 0 ? y : y - 399) / 400;
    const int yoe = static_cast<int>(y - era * 400);
    const int doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const int doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + doe - 719468;
}

void civil_from_days(int64_t z, int& y, int& m, int& d) {
    z += 719468;
    const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const int doe = static_cast<int>(z - era * 146097);
    const int yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const int64_t yy = yoe + era * 400;
    const int doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const int mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp + (mp < 10 ? 3 : -9);
    y = static_cast<int>(yy + (m <= 2));
}

bool is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

int days_in_month(int y, int m) {
    static const std::array<int, 12> days = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (m == 2 && is_leap(y)) return 29;
    return days[m - 1];
}

int parse_digits(const std::string& s, size_t pos, size_t n) {
    int v = 0;
    for (size_t i = pos; i < pos + n; ++i) {
        const char c = s[i];
        if (c < '0' || c > '9') raise(Errc::schema, "bad timestamp '" + s + "'");
        v = v * 10 + (c - '0');
    }
    return v;
}

}  // namespace

int64_t parse_hour_utc(const std::string& text) {
    // YYYY-MM-DDTHH:00:00Z, 20 characters, all separators fixed.
    if (text.size() != 20 || text[4] != '-' || text[7] != '-' || text[10] != 'T' ||
        text[13] != ':' || text[16] != ':' || text[19] != 'Z')
        raise(Errc::schema, "bad timestamp '" + text + "' (expected YYYY-MM-DDTHH:00:00Z)");
    const int year = parse_digits(text, 0, 4);
    const int month = parse_digits(text, 5, 2);
    const int day = parse_digits(text, 8, 2);
    const int hour = parse_digits(text, 11, 2);
    const int minute = parse_digits(text, 14, 2);
    const int second = parse_digits(text, 17, 2);
    if (month < 1 || month > 12 || day < 1 || hour > 23)
        raise(Errc::schema, "bad timestamp '" + text + "'");
    if (day > days_in_month(year, month)) raise(Errc::schema, "bad timestamp '" + text + "'");
    if (minute != 0 || second != 0)
        raise(Errc::schema, "timestamp '" + text + "' is not aligned to an hour boundary");
    return days_from_civil(year, month, day) * 24 + hour;
}

std::string format_hour_utc(int64_t epoch_hours) {
    int64_t days = epoch_hours / 24;
    int hour = static_cast<int>(epoch_hours % 24);
    if (hour < 0) {
        hour += 24;
        days -= 1;
    }
    int y, m, d;
    civil_from_days(days, y, m, d);
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:00:00Z", y, m, d, hour);
    return buf;
}

}  // namespace carbonfl
