#include "air/dates.hpp"

#include <array>
#include <cctype>
#include <cstdio>

namespace air {

namespace {

bool is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

int days_in_month(int y, int m) {
    static constexpr std::array<int, 12> lens{31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (m == 2 && is_leap(y)) return 29;
    return lens[static_cast<size_t>(m - 1)];
}

// Days since 1970-01-01 for a civil date (Howard Hinnant's algorithm).
std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = static_cast<unsigned>((153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1);
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
    y = static_cast<int>(yy + (m <= 2));
}

}  // namespace

Date Date::parse(const std::string& iso) {
    auto d = try_parse(iso);
    if (!d) throw DataError("invalid date '" + iso + "', expected YYYY-MM-DD");
    return *d;
}

std::optional<Date> Date::try_parse(const std::string& s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
    for (size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u})
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) return std::nullopt;
    Date d;
    d.year = std::stoi(s.substr(0, 4));
    d.month = std::stoi(s.substr(5, 2));
    d.day = std::stoi(s.substr(8, 2));
    if (d.month < 1 || d.month > 12) return std::nullopt;
    if (d.day < 1 || d.day > days_in_month(d.year, d.month)) return std::nullopt;
    return d;
}

Date Date::from_serial(std::int64_t days) {
    Date d;
    civil_from_days(days, d.year, d.month, d.day);
    return d;
}

std::string Date::str() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", year, month, day);
    return buf;
}

std::int64_t Date::serial() const { return days_from_civil(year, month, day); }

int Date::weekday() const {
    // 1970-01-01 was a Thursday.
    const std::int64_t z = serial();
    return static_cast<int>(((z % 7) + 10) % 7) + 1;
}

IsoWeek iso_week(Date d) {
    // The ISO week of a date is the week of its Thursday; week 1 of a year is
    // the week containing the first Thursday of that year.
    const Date thursday = d.plus_days(4 - d.weekday());
    const Date jan1{thursday.year, 1, 1};
    const int doy = static_cast<int>(thursday.serial() - jan1.serial()) + 1;
    return IsoWeek{thursday.year, (doy - 1) / 7 + 1};
}

Date monday_of_iso_week(int iso_year, int week) {
    if (week < 1 || week > 53) throw DataError("iso week out of range: " + std::to_string(week));
    // January 4th always lies in week 1.
    const Date jan4{iso_year, 1, 4};
    const Date week1_monday = jan4.plus_days(1 - jan4.weekday());
    return week1_monday.plus_days(7 * (week - 1));
}

IsoWeek parse_iso_week(const std::string& s) {
    // "YYYY-Wnn"
    if (s.size() != 8 || s[4] != '-' || (s[5] != 'W' && s[5] != 'w'))
        throw ConfigError("invalid week '" + s + "', expected YYYY-Wnn");
    for (size_t i : {0u, 1u, 2u, 3u, 6u, 7u})
        if (!std::isdigit(static_cast<unsigned char>(s[i])))
            throw ConfigError("invalid week '" + s + "', expected YYYY-Wnn");
    IsoWeek w;
    w.year = std::stoi(s.substr(0, 4));
    w.week = std::stoi(s.substr(6, 2));
    if (w.week < 1 || w.week > 53) throw ConfigError("week number out of range in '" + s + "'");
    return w;
}

std::vector<Date> weekdays_between(Date first, Date last) {
    std::vector<Date> out;
    for (std::int64_t z = first.serial(); z <= last.serial(); ++z) {
        Date d = Date::from_serial(z);
        if (d.is_weekday()) out.push_back(d);
    }
    return out;
}

}  // namespace air
