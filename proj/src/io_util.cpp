#include "pll/io_util.hpp"

#include <fstream>
#include <limits>

#include <fmt/format.h>

namespace pll::io {

namespace {

std::vector<std::string> split_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      break;
    }
    out.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

}  // namespace

CsvTable read_csv(const std::filesystem::path& path, std::vector<std::string_view> expected_header) {
  std::ifstream in(path);
  if (!in) throw DataError(DataErrorKind::Io, fmt::format("cannot open '{}'", path.string()));
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_line(line);
    if (!have_header) {
      table.header = std::move(fields);
      if (!expected_header.empty() &&
          !std::equal(table.header.begin(), table.header.end(), expected_header.begin(),
                      expected_header.end())) {
        throw DataError(DataErrorKind::MalformedCsv,
                        fmt::format("{}:{}: unexpected header '{}'", path.string(), line_no, line));
      }
      have_header = true;
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw DataError(DataErrorKind::MalformedCsv,
                      fmt::format("{}:{}: expected {} fields, got {}", path.string(), line_no,
                                  table.header.size(), fields.size()));
    }
    table.rows.push_back(std::move(fields));
    table.line_numbers.push_back(line_no);
  }
  if (!have_header) {
    throw DataError(DataErrorKind::MalformedCsv, fmt::format("{}: missing header", path.string()));
  }
  return table;
}

void check_csv_field(std::string_view field) {
  if (field.find_first_of(",\r\n") != std::string_view::npos) {
    throw std::invalid_argument(fmt::format("value '{}' cannot be stored in CSV", field));
  }
}

std::uint32_t checked_u32(std::size_t v, std::string_view what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    throw std::invalid_argument(fmt::format("{} ({}) does not fit in u32", what, v));
  }
  return static_cast<std::uint32_t>(v);
}

}  // namespace pll::io
