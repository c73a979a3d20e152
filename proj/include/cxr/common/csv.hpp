#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace cxr::csv {

using Row = std::vector<std::string>;

/// RFC 4180 quoting: fields containing ',', '"' or newlines are quoted.
std::string escape(std::string_view field);
std::string join(const Row& fields);

/// Splits one line (no embedded newlines) honouring double quotes.
Row split_line(std::string_view line);

/// Reads the whole file; the first row is the header. Throws DataError on
/// missing file or ragged rows.
struct Table {
  Row header;
  std::vector<Row> rows;

  /// Index of a header column; throws DataError if absent.
  std::size_t column(std::string_view name) const;
};

Table read(const std::filesystem::path& path);
void write(const std::filesystem::path& path, const Table& table);

}  // namespace cxr::csv
