#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "modechoice/common.hpp"

namespace modechoice {

/// Minimal CSV table: header row + string cells. Lines starting with '#'
/// are metadata comments and are skipped.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int col(const std::string& name) const {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return static_cast<int>(j);
    return -1;
  }

  int require_col(const std::string& name) const {
    int j = col(name);
    if (j < 0) throw validation_error("missing column '" + name + "' in CSV header");
    return j;
  }
};

namespace detail {
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}
}  // namespace detail

inline CsvTable read_csv(std::istream& in, const std::string& what = "stream") {
  CsvTable t;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto cells = detail::split_csv_line(line);
    if (!have_header) {
      t.header = std::move(cells);
      have_header = true;
    } else {
      if (cells.size() != t.header.size())
        throw validation_error(what + ": row " + std::to_string(t.rows.size() + 1) +
                               " has " + std::to_string(cells.size()) + " cells, expected " +
                               std::to_string(t.header.size()));
      t.rows.push_back(std::move(cells));
    }
  }
  if (!have_header) throw validation_error(what + ": empty CSV, no header row");
  return t;
}

inline CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("cannot open CSV file '" + path + "'");
  return read_csv(in, path);
}

inline double parse_num(const std::string& cell, const std::string& col, long long row) {
  const char* b = cell.data();
  const char* e = b + cell.size();
  double v{};
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e)
    throw validation_error("non-numeric value '" + cell + "' in column '" + col +
                           "', row " + std::to_string(row));
  if (!std::isfinite(v))
    throw validation_error("non-finite value in column '" + col + "', row " +
                           std::to_string(row));
  return v;
}

/// Output writer that prepends the toolkit/version/seed metadata line every
/// artifact carries.
class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path) : out_(path) {
    if (!out_) throw std::runtime_error("cannot open '" + path + "' for writing");
  }

  void meta(const std::string& config_hash, std::uint64_t seed) {
    out_ << "# modechoice " << kVersion << " config=" << config_hash << " seed=" << seed
         << "\n";
  }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

}  // namespace modechoice
