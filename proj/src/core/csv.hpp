// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace laborflow::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row

  /// Index of a header column, or throws a parse error naming the file.
  std::size_t column(std::string_view name) const;
  bool has_column(std::string_view name) const;
  std::string source;
};

/// Splits one CSV record. Double-quoted fields may contain commas and
/// doubled quotes; embedded newlines are not supported.
std::vector<std::string> split_line(std::string_view line);

Table read_file(const std::filesystem::path& path);
Table read_string(std::string_view text, std::string source = "<memory>");

double parse_double(std::string_view field, const std::string& where);
long long parse_int(std::string_view field, const std::string& where);

/// Shortest representation that parses back to the identical double.
/// NaN is written as an empty field.
std::string format_double(double value);

std::string quote_if_needed(std::string_view field);

/// Zero-padded identifier such as "U007", wide enough for n - 1.
std::string padded_id(char prefix, std::size_t i, std::size_t n, std::size_t min_width = 3);

class Writer {
 public:
  Writer& field(std::string_view text);
  Writer& field(double value);
  Writer& field(long long value);
  Writer& field(std::size_t value) { return field(static_cast<long long>(value)); }
  Writer& field(int value) { return field(static_cast<long long>(value)); }
  Writer& field(long value) { return field(static_cast<long long>(value)); }
  Writer& end_row();

  template <typename... Ts>
  Writer& row(const Ts&... fields) {
    (field(fields), ...);
    return end_row();
  }

  const std::string& str() const { return out_; }

 private:
  std::string out_;
  bool row_open_ = false;
};

}  // namespace laborflow::csv
