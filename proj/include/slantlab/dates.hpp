#pragma once

#include <charconv>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

#include "slantlab/common.hpp"

namespace slantlab {

// UTC calendar date stored as days since 1970-01-01. All "day" boundaries in
// the toolkit are UTC dates.
struct Date {
    int32_t days = 0;

    auto operator<=>(const Date&) const = default;

    Date& operator+=(int n) {
        days += n;
        return *this;
    }
    friend Date operator+(Date d, int n) { return Date{d.days + n}; }
    friend Date operator-(Date d, int n) { return Date{d.days - n}; }
    friend int operator-(Date a, Date b) { return a.days - b.days; }
};

namespace detail {

// Howard Hinnant's civil-date algorithms.
inline int64_t days_from_civil(int y, unsigned m, unsigned d) {
    y -= m <= 2;
    const int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<int64_t>(doe) - 719468;
}

inline void civil_from_days(int64_t z, int& y, unsigned& m, unsigned& d) {
    z += 719468;
    const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const int64_t yy = static_cast<int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp + (mp < 10 ? 3 : -9);
    y = static_cast<int>(yy + (m <= 2));
}

inline bool parse_int(std::string_view s, int& out) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
}

} // namespace detail

inline Date make_date(int y, unsigned m, unsigned d) {
    return Date{static_cast<int32_t>(detail::days_from_civil(y, m, d))};
}

// "YYYY-MM-DD"
inline Date parse_date(std::string_view s) {
    int y = 0, m = 0, d = 0;
    if (s.size() != 10 || s[4] != '-' || s[7] != '-' ||
        !detail::parse_int(s.substr(0, 4), y) || !detail::parse_int(s.substr(5, 2), m) ||
        !detail::parse_int(s.substr(8, 2), d) || m < 1 || m > 12 || d < 1 || d > 31) {
        throw DataError("bad date: '" + std::string(s) + "'");
    }
    return make_date(y, static_cast<unsigned>(m), static_cast<unsigned>(d));
}

inline std::string to_string(Date date) {
    int y;
    unsigned m, d;
    detail::civil_from_days(date.days, y, m, d);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", y, m, d);
    return buf;
}

// ISO-8601 instant, e.g. "2022-03-02T08:15:00Z" or with a "+hh:mm" offset.
// Returns UTC epoch seconds. Date-only strings parse as midnight UTC.
inline int64_t parse_timestamp(std::string_view s) {
    if (s.size() == 10) return static_cast<int64_t>(parse_date(s).days) * 86400;
    if (s.size() < 19 || (s[10] != 'T' && s[10] != ' ')) {
        throw DataError("bad timestamp: '" + std::string(s) + "'");
    }
    const Date day = parse_date(s.substr(0, 10));
    int hh = 0, mm = 0, ss = 0;
    if (s[13] != ':' || s[16] != ':' || !detail::parse_int(s.substr(11, 2), hh) ||
        !detail::parse_int(s.substr(14, 2), mm) || !detail::parse_int(s.substr(17, 2), ss) ||
        hh > 23 || mm > 59 || ss > 60) {
        throw DataError("bad timestamp: '" + std::string(s) + "'");
    }
    int64_t t = static_cast<int64_t>(day.days) * 86400 + hh * 3600 + mm * 60 + ss;
    std::string_view rest = s.substr(19);
    if (!rest.empty() && rest[0] == '.') { // fractional seconds: ignore digits
        size_t i = 1;
        while (i < rest.size() && rest[i] >= '0' && rest[i] <= '9') ++i;
        rest = rest.substr(i);
    }
    if (rest.empty() || rest == "Z" || rest == "z") return t;
    if ((rest[0] == '+' || rest[0] == '-') && rest.size() == 6 && rest[3] == ':') {
        int oh = 0, om = 0;
        if (detail::parse_int(rest.substr(1, 2), oh) && detail::parse_int(rest.substr(4, 2), om)) {
            const int64_t off = oh * 3600 + om * 60;
            return rest[0] == '+' ? t - off : t + off;
        }
    }
    throw DataError("bad timestamp offset: '" + std::string(s) + "'");
}

// Euclidean floor division keeps pre-1970 instants on the right calendar day.
inline Date date_of_timestamp(int64_t epoch_seconds) {
    int64_t d = epoch_seconds / 86400;
    if (epoch_seconds % 86400 < 0) --d;
    return Date{static_cast<int32_t>(d)};
}

} // namespace slantlab
