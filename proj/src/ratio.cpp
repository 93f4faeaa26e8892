#include "ismell/ratio.hpp"

#include <stdexcept>

namespace ismell {

std::string format_2dp(const Ratio& r) {
    if (r.den <= 0) throw std::invalid_argument("Ratio with non-positive denominator");
    if (r.num < 0) throw std::invalid_argument("Ratio is negative");
    // round-half-up of 100 * num / den, integer-exact
    const long long scaled = (200 * r.num + r.den) / (2 * r.den);
    std::string out = std::to_string(scaled / 100);
    const long long frac = scaled % 100;
    out += '.';
    out += static_cast<char>('0' + frac / 10);
    out += static_cast<char>('0' + frac % 10);
    return out;
}

std::string format_percent(const Ratio& r) { return format_2dp(r) + "%"; }

double to_double(const Ratio& r) { return static_cast<double>(r.num) / static_cast<double>(r.den); }

}  // namespace ismell
