#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace efc::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column position of `name`, or -1.
  long column(std::string_view name) const;
};

/// Reads a comma-separated file with a header line. Blank lines are skipped;
/// ragged rows raise MalformedFile, an empty file raises EmptyFile.
Table read(const std::filesystem::path& path);

/// Strict decimal parse of a whole cell; MalformedFile on failure.
double parse_double(std::string_view cell);

/// Shortest representation that round-trips.
std::string format_double(double value);

std::vector<std::string> split_line(std::string_view line);

}  // namespace efc::csv
