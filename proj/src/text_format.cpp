#include "ghostseg/text_format.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <system_error>

namespace ghostseg {

std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw std::runtime_error("format_double: conversion failed");
    return std::string(buf, end);
}

std::string format_percent(double v) {
    if (!std::isfinite(v)) return "nan";
    // Snap to nine decimals first so that sums such as (92.81 + 92.96) / 2,
    // stored as 92.88499999..., round the way the decimal value reads.
    char buf[512];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), std::abs(v), std::chars_format::fixed, 9);
    if (ec != std::errc{}) throw std::runtime_error("format_percent: conversion failed");
    std::string s(buf, end);
    auto dot = s.find('.');
    if (dot == std::string::npos) {
        s += ".";
        dot = s.size() - 1;
    }
    while (s.size() < dot + 4) s += '0';
    const bool round_up = s[dot + 3] >= '5';
    s.resize(dot + 3);
    if (round_up) {
        int i = static_cast<int>(s.size()) - 1;
        for (; i >= 0; --i) {
            if (s[i] == '.') continue;
            if (s[i] == '9') {
                s[i] = '0';
            } else {
                ++s[i];
                break;
            }
        }
        if (i < 0) s.insert(s.begin(), '1');
    }
    const bool all_zero = s.find_first_not_of("0.") == std::string::npos;
    if (v < 0.0 && !all_zero) s.insert(s.begin(), '-');
    return s;
}

double parse_double(std::string_view text, std::string_view what) {
    double v = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last)
        throw std::invalid_argument("cannot parse " + std::string(what) + " from '" + std::string(text) + "'");
    return v;
}

long long parse_int(std::string_view text, std::string_view what) {
    long long v = 0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last)
        throw std::invalid_argument("cannot parse " + std::string(what) + " from '" + std::string(text) + "'");
    return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace ghostseg
