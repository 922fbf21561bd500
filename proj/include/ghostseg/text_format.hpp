#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace ghostseg {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
/// Fixed two decimals, round half up on the value snapped to nine decimals
/// (74.485 -> "74.49").
std::string format_percent(double v);

/// Strict parse; throws std::invalid_argument naming `what` on failure.
double parse_double(std::string_view text, std::string_view what = "number");
long long parse_int(std::string_view text, std::string_view what = "integer");

std::vector<std::string_view> split(std::string_view line, char sep);

/// 64-bit FNV-1a, used to fingerprint dataset files in reports.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 14695981039346656037ull);

}  // namespace ghostseg
