#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace netmix::csv {

using Row = std::vector<std::string>;

/// Splits one comma-separated line; surrounding whitespace is trimmed.
Row split_line(std::string_view line);

/// Reads every non-empty line of a comma-separated file.
std::vector<Row> read_file(const std::filesystem::path& path);

/// Parses a decimal number; throws DataError naming `what` on failure.
double parse_double(std::string_view text, std::string_view what);

bool looks_numeric(std::string_view text);

/// Column index by header name; throws DataError if absent.
std::size_t column_index(const Row& header, std::string_view name, const std::filesystem::path& path);

/// Shortest text that reads back to the same double.
std::string format_double(double v);

}  // namespace netmix::csv
