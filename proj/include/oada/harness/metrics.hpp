#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace oada::harness {

// Column-ordered CSV table; an absent cell is written empty.
class MetricsTable {
 public:
  using Row = std::map<std::string, double>;

  MetricsTable() = default;
  explicit MetricsTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

  const std::vector<std::string>& columns() const { return columns_; }
  const std::vector<Row>& rows() const { return rows_; }
  bool has_column(const std::string& c) const {
    return std::find(columns_.begin(), columns_.end(), c) != columns_.end();
  }

  void add(Row row) {
    for (const auto& [k, v] : row) {
      if (!has_column(k)) throw std::logic_error("metrics: unknown column '" + k + "'");
    }
    rows_.push_back(std::move(row));
  }

  std::optional<double> get(std::size_t row, const std::string& col) const {
    const Row& r = rows_.at(row);
    if (auto it = r.find(col); it != r.end()) return it->second;
    return std::nullopt;
  }

  void write_csv(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("metrics: cannot open " + path.string());
    for (std::size_t i = 0; i < columns_.size(); ++i) out << (i ? "," : "") << columns_[i];
    out << '\n';
    char buf[40];
    for (const Row& r : rows_) {
      for (std::size_t i = 0; i < columns_.size(); ++i) {
        if (i) out << ',';
        if (auto it = r.find(columns_[i]); it != r.end()) {
          std::snprintf(buf, sizeof(buf), "%.17g", it->second);
          out << buf;
        }
      }
      out << '\n';
    }
  }

  static MetricsTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("metrics: cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    MetricsTable t(split(line));
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto cells = split(line);
      Row r;
      for (std::size_t i = 0; i < cells.size() && i < t.columns_.size(); ++i) {
        if (!cells[i].empty()) r[t.columns_[i]] = std::stod(cells[i]);
      }
      t.rows_.push_back(std::move(r));
    }
    return t;
  }

 private:
  static std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
  }

  std::vector<std::string> columns_;
  std::vector<Row> rows_;
};

}  // namespace oada::harness
