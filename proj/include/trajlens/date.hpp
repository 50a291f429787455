#pragma once

#include <charconv>
#include <chrono>
#include <cmath>
#include <compare>
#include <cstdio>
#include <string>
#include <string_view>

#include "trajlens/error.hpp"

namespace trajlens {

/// Calendar date with day resolution.
class Date {
public:
    constexpr Date() = default;
    constexpr explicit Date(std::chrono::sys_days days) : days_(days) {}
    Date(int y, unsigned m, unsigned d) {
        const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
        if (!ymd.ok()) {
            throw DataError("invalid calendar date " + std::to_string(y) + "-" + std::to_string(m) + "-" + std::to_string(d));
        }
        days_ = std::chrono::sys_days{ymd};
    }

    /// Strict ISO-8601 `YYYY-MM-DD`.
    static Date parse(std::string_view text) {
        auto fail = [&]() -> Date { throw DataError("invalid ISO date '" + std::string(text) + "'"); };
        if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
            return fail();
        }
        int y = 0;
        unsigned m = 0;
        unsigned d = 0;
        auto field = [&](std::size_t pos, std::size_t len, auto& out) {
            const auto* first = text.data() + pos;
            const auto [ptr, ec] = std::from_chars(first, first + len, out);
            return ec == std::errc{} && ptr == first + len;
        };
        if (!field(0, 4, y) || !field(5, 2, m) || !field(8, 2, d)) {
            return fail();
        }
        const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
        if (!ymd.ok()) {
            return fail();
        }
        return Date{std::chrono::sys_days{ymd}};
    }

    std::chrono::year_month_day ymd() const { return std::chrono::year_month_day{days_}; }
    int year() const { return static_cast<int>(ymd().year()); }
    long serial() const { return days_.time_since_epoch().count(); }

    std::string iso() const {
        const auto v = ymd();
        char buf[16];
        std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(v.year()), static_cast<unsigned>(v.month()),
                      static_cast<unsigned>(v.day()));
        return buf;
    }

    /// Calendar year plus the elapsed fraction of that year.
    double decimal_year() const {
        const auto v = ymd();
        const auto jan1 = std::chrono::sys_days{v.year() / std::chrono::January / 1};
        const auto next = std::chrono::sys_days{(v.year() + std::chrono::years{1}) / std::chrono::January / 1};
        const double elapsed = static_cast<double>((days_ - jan1).count());
        const double length = static_cast<double>((next - jan1).count());
        return static_cast<double>(static_cast<int>(v.year())) + elapsed / length;
    }

    /// Shift by whole calendar years; 29 February clamps to 28 February.
    Date add_years(int years) const {
        const auto v = ymd();
        auto shifted = (v.year() + std::chrono::years{years}) / v.month() / v.day();
        if (!shifted.ok()) {
            shifted = (v.year() + std::chrono::years{years}) / v.month() / std::chrono::last;
        }
        return Date{std::chrono::sys_days{shifted}};
    }

    Date add_days(long days) const { return Date{days_ + std::chrono::days{days}}; }

    /// Shift by a possibly fractional number of years. Whole years use
    /// calendar arithmetic; the fractional remainder uses 365.25-day years.
    Date shift_years(double years) const {
        const double whole = std::floor(years);
        const long extra = std::lround((years - whole) * 365.25);
        return add_years(static_cast<int>(whole)).add_days(extra);
    }

    friend long days_between(Date a, Date b) { return (b.days_ - a.days_).count(); }
    friend auto operator<=>(const Date&, const Date&) = default;

private:
    std::chrono::sys_days days_{};
};

/// Signed years from `origin` to `d`, on the decimal-year scale.
inline double years_between(Date origin, Date d) { return d.decimal_year() - origin.decimal_year(); }

} // namespace trajlens
