#ifndef RVM_CSV_HPP
#define RVM_CSV_HPP

// Minimal CSV writer: '#' header block, one column-name row, 17 significant digits.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace rvm {

struct CsvMeta {
  std::string title;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string version;
};

inline std::string format_number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Writes columns of equal length. Throws std::runtime_error on I/O failure.
inline void write_csv(const std::string& path, const CsvMeta& meta,
                      const std::vector<std::pair<std::string, std::vector<double>>>& columns) {
  std::size_t rows = columns.empty() ? 0 : columns.front().second.size();
  for (const auto& c : columns) {
    if (c.second.size() != rows) throw std::invalid_argument("write_csv: column '" + c.first + "' has the wrong length");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "# " << meta.title << "\n";
  out << "# rvm_version=" << meta.version << "\n";
  out << "# config_hash=" << meta.config_hash << "\n";
  out << "# seed=" << meta.seed << "\n";
  for (std::size_t j = 0; j < columns.size(); ++j) out << (j ? "," : "") << columns[j].first;
  out << "\n";
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < columns.size(); ++j) out << (j ? "," : "") << format_number(columns[j].second[r]);
    out << "\n";
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace rvm

#endif
