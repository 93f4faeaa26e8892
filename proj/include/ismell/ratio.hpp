#pragma once

#include <cstdint>
#include <string>

namespace ismell {

// Exact non-negative rational. Metric arithmetic stays rational internally;
// rounding happens once, at render time.
struct Ratio {
    long long num = 0;
    long long den = 1;

    friend bool operator==(const Ratio&, const Ratio&) = default;
};

// Half-up rounding to two decimals, e.g. {4700,60} -> "78.33".
std::string format_2dp(const Ratio& r);

// Same, with a trailing percent sign.
std::string format_percent(const Ratio& r);

double to_double(const Ratio& r);

}  // namespace ismell
