#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace causalgap::detail {

// Minimal reader for the comma-separated files this project reads and
// writes: no embedded commas or quotes, '#' comment lines, blank lines
// skipped, CRLF tolerated. Cells are trimmed of surrounding spaces.
class CsvReader {
 public:
  explicit CsvReader(std::string_view text) : text_(text) {}

  // Reads the next data row into cells; false at end of input.
  bool next(std::vector<std::string>& cells) {
    while (pos_ < text_.size()) {
      std::size_t end = text_.find('\n', pos_);
      if (end == std::string_view::npos) end = text_.size();
      std::string_view row = text_.substr(pos_, end - pos_);
      pos_ = end + 1;
      ++line_;
      if (!row.empty() && row.back() == '\r') row.remove_suffix(1);
      if (row.empty() || row.front() == '#') continue;
      cells.clear();
      std::size_t start = 0;
      for (;;) {
        const std::size_t comma = row.find(',', start);
        cells.emplace_back(trim(row.substr(start, comma == std::string_view::npos ? comma : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
      }
      return true;
    }
    return false;
  }

  // 1-based physical line number of the row last returned.
  std::size_t line() const { return line_; }

 private:
  static std::string_view trim(std::string_view s) {
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 0;
};

}  // namespace causalgap::detail
