#include "efc/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "efc/errors.hpp"

namespace efc::csv {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

long Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<long>(i);
  }
  return -1;
}

std::vector<std::string> split_line(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    const auto cell = trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
    cells.emplace_back(cell);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

Table read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::Io, "cannot open " + path.string());
  Table table;
  std::string line;
  bool have_header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_line(line);
    if (!have_header) {
      table.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != table.header.size()) {
      fail(Errc::MalformedFile, path.string() + ":" + std::to_string(line_no) + ": expected " +
                                    std::to_string(table.header.size()) + " cells, got " +
                                    std::to_string(cells.size()));
    }
    table.rows.push_back(std::move(cells));
  }
  if (!have_header) fail(Errc::EmptyFile, path.string() + " is empty");
  return table;
}

double parse_double(std::string_view cell) {
  cell = trim(cell);
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  double value = 0.0;
  const auto* end = cell.data() + cell.size();
  const auto [ptr, ec] = std::from_chars(cell.data(), end, value);
  if (cell.empty() || ec != std::errc() || ptr != end) {
    fail(Errc::MalformedFile, "not a number: '" + std::string(cell) + "'");
  }
  return value;
}

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

}  // namespace efc::csv
