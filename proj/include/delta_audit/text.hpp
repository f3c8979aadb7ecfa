#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace delta_audit {

// Shortest decimal representation that parses back to the same double.
std::string format_double(double v);

// Strict parsers: the whole string must be consumed. Throw ConfigError naming `what`.
double parse_double(std::string_view s, std::string_view what);
long long parse_int(std::string_view s, std::string_view what);
bool parse_bool(std::string_view s, std::string_view what);

std::string trim_copy(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

}  // namespace delta_audit
