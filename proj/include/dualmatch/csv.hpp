#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dualmatch::csv {

/// Splits one CSV record. Handles double-quoted fields with "" escapes.
std::vector<std::string> split_record(std::string_view line, char delimiter = ',');

/// Reads a whole file into records; skips blank lines and strips a UTF-8 BOM
/// and trailing '\r'.
std::vector<std::vector<std::string>> read_file(const std::filesystem::path& path,
                                                char delimiter = ',');

/// Shortest representation that round-trips to the same double.
std::string format_double(double value);

std::optional<double> parse_double(std::string_view text);

/// Quotes a field if it contains the delimiter, a quote or a newline.
std::string escape(std::string_view field, char delimiter = ',');

void write_row(std::ostream& out, const std::vector<std::string>& fields, char delimiter = ',');

}  // namespace dualmatch::csv
