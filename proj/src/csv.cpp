#include "csv.hpp"

#include <charconv>
#include <cmath>

#include "ctxscale/errors.hpp"

namespace ctxscale::csv {

std::vector<std::string> split_line(std::string_view line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current.push_back(c);
      }
    } else if (c == '"') {
      if (!current.empty() || was_quoted) {
        throw ParseError(line_no, "stray quote inside unquoted field");
      }
      quoted = true;
      was_quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(current));
      current.clear();
      was_quoted = false;
    } else {
      current.push_back(c);
    }
  }
  if (quoted) {
    throw ParseError(line_no, "unterminated quoted field");
  }
  fields.push_back(std::move(current));
  return fields;
}

std::string quote_if_needed(std::string_view field) {
  if (field.find_first_of(",\"\n") == std::string_view::npos) {
    return std::string(field);
  }
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') {
      out.push_back('"');
    }
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string format_double(double value) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, end);
}

double parse_double(std::string_view text, std::string_view field, std::size_t line_no) {
  double value = 0;
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || text.empty()) {
    throw ParseError(line_no, "field '" + std::string(field) + "' is not a number: '" +
                                  std::string(text) + "'");
  }
  if (!std::isfinite(value)) {
    throw ParseError(line_no, "field '" + std::string(field) + "' is not finite");
  }
  return value;
}

long long parse_integer(std::string_view text, std::string_view field, std::size_t line_no) {
  const double value = parse_double(text, field, line_no);
  if (value != std::floor(value) || std::abs(value) > 9.0e15) {
    throw ParseError(line_no, "field '" + std::string(field) + "' must be an integer");
  }
  return static_cast<long long>(value);
}

}  // namespace ctxscale::csv
