#pragma once

// Minimal CSV helpers shared by the record and report readers. Fields may be
// double-quoted; embedded quotes are doubled. No multi-line fields.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace ctxscale::csv {

std::vector<std::string> split_line(std::string_view line, std::size_t line_no);

std::string quote_if_needed(std::string_view field);

// Shortest representation that parses back to the same double.
std::string format_double(double value);

double parse_double(std::string_view text, std::string_view field, std::size_t line_no);
long long parse_integer(std::string_view text, std::string_view field, std::size_t line_no);

}  // namespace ctxscale::csv
