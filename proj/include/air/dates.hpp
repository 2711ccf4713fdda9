#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "air/errors.hpp"

namespace air {

// Proleptic Gregorian calendar date. Serial arithmetic uses the civil-days
// mapping with day 0 = 1970-01-01.
struct Date {
    int year = 1970;
    int month = 1;
    int day = 1;

    static Date parse(const std::string& iso);                 // "YYYY-MM-DD", throws DataError
    static std::optional<Date> try_parse(const std::string&);
    static Date from_serial(std::int64_t days);

    std::string str() const;
    std::int64_t serial() const;
    int weekday() const;  // 1=Monday .. 7=Sunday
    Date plus_days(int n) const { return from_serial(serial() + n); }
    bool is_weekday() const { return weekday() <= 5; }

    auto operator<=>(const Date&) const = default;
};

struct IsoWeek {
    int year = 0;
    int week = 0;
    auto operator<=>(const IsoWeek&) const = default;
};

// ISO-8601 week-numbering year and week of a date.
IsoWeek iso_week(Date d);

// Monday of the given ISO week.
Date monday_of_iso_week(int iso_year, int week);

// Parses "YYYY-Wnn" (e.g. "2022-W01").
IsoWeek parse_iso_week(const std::string& s);

// All Mondays..Fridays in [first, last], inclusive.
std::vector<Date> weekdays_between(Date first, Date last);

}  // namespace air
