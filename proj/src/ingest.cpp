#include "clipcp/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "clipcp/error.hpp"

namespace clipcp::ingest {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::size_t parse_index(const std::string& cell, const std::string& path, std::size_t row, const std::string& column) {
  const double v = parse_double(cell, path, row, column);
  if (!(v >= 0.0) || v != std::floor(v) || v > 9.0e15) {
    throw ParseError(path, row, column, "expected a nonnegative integer, got '" + cell + "'");
  }
  return static_cast<std::size_t>(v);
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path + ": cannot open for reading");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

}  // namespace

CsvSchema CsvSchema::with_features(std::size_t d, bool label, bool score, bool group) {
  CsvSchema s;
  for (std::size_t j = 0; j < d; ++j) s.features.push_back("x" + std::to_string(j));
  s.label = label;
  s.score = score;
  s.group = group;
  return s;
}

std::vector<std::string> CsvSchema::columns() const {
  std::vector<std::string> cols = features;
  if (label) cols.emplace_back("y");
  if (score) cols.emplace_back("score");
  if (group) cols.emplace_back("group");
  return cols;
}

void CsvSchema::validate() const {
  if (features.empty() && !score && !group) throw InvalidInput("CSV schema needs feature, score or group columns");
  const auto cols = columns();
  const std::set<std::string> unique(cols.begin(), cols.end());
  if (unique.size() != cols.size()) throw InvalidInput("CSV schema has duplicate column names");
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& raw, const std::string& path, std::size_t row, const std::string& column) {
  const std::string cell = trim(raw);
  if (cell == "nan" || cell == "NaN") return std::numeric_limits<double>::quiet_NaN();
  if (cell == "inf" || cell == "+inf" || cell == "Inf") return std::numeric_limits<double>::infinity();
  if (cell == "-inf" || cell == "-Inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (cell.empty() || ec != std::errc() || ptr != last) {
    throw ParseError(path, row, column, "not a number: '" + raw + "'");
  }
  return v;
}

synth::GeneratedDataset read_dataset(const std::string& path, const CsvSchema& schema) {
  schema.validate();
  if (!std::filesystem::exists(path)) throw IoError(path + ": file does not exist");
  const auto lines = read_lines(path);
  if (lines.empty()) throw ParseError(path, 0, "", "missing header");

  const auto header = split_line(lines.front());
  std::map<std::string, std::size_t> position;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string name = trim(header[c]);
    if (!position.emplace(name, c).second) throw ParseError(path, 0, name, "duplicate column");
  }
  const auto expected = schema.columns();
  for (const auto& col : expected) {
    if (!position.count(col)) throw ParseError(path, 0, col, "column required by the schema is missing");
  }
  if (position.size() != expected.size()) {
    for (const auto& [name, idx] : position) {
      if (std::find(expected.begin(), expected.end(), name) == expected.end()) {
        throw ParseError(path, 0, name, "column not in the schema");
      }
    }
  }

  std::vector<std::string> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (!trim(lines[i]).empty()) rows.push_back(lines[i]);
  }
  const std::size_t n = rows.size();
  synth::GeneratedDataset ds;
  ds.x = Matrix(n, schema.features.size());
  if (schema.label) ds.y.emplace(n);
  if (schema.score) ds.scores.emplace(n);
  if (schema.group) ds.groups.emplace(n);

  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t row = i + 1;
    const auto cells = split_line(rows[i]);
    if (cells.size() != header.size()) {
      throw ParseError(path, row, "", "expected " + std::to_string(header.size()) + " cells, found " +
                                          std::to_string(cells.size()));
    }
    for (std::size_t j = 0; j < schema.features.size(); ++j) {
      const auto& name = schema.features[j];
      ds.x(i, j) = parse_double(cells[position.at(name)], path, row, name);
    }
    if (schema.label) (*ds.y)[i] = parse_double(cells[position.at("y")], path, row, "y");
    if (schema.score) (*ds.scores)[i] = parse_double(cells[position.at("score")], path, row, "score");
    if (schema.group) (*ds.groups)[i] = parse_index(cells[position.at("group")], path, row, "group");
  }
  return ds;
}

void write_dataset(const synth::GeneratedDataset& ds, const std::string& path) {
  std::ostringstream out;
  std::vector<std::string> cols;
  for (std::size_t j = 0; j < ds.x.cols; ++j) cols.push_back("x" + std::to_string(j));
  if (ds.y) cols.emplace_back("y");
  if (ds.scores) cols.emplace_back("score");
  if (ds.groups) cols.emplace_back("group");
  for (std::size_t c = 0; c < cols.size(); ++c) out << (c ? "," : "") << cols[c];
  out << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    bool first = true;
    auto put = [&](const std::string& s) {
      out << (first ? "" : ",") << s;
      first = false;
    };
    for (std::size_t j = 0; j < ds.x.cols; ++j) put(format_double(ds.x(i, j)));
    if (ds.y) put(format_double((*ds.y)[i]));
    if (ds.scores) put(format_double((*ds.scores)[i]));
    if (ds.groups) put(std::to_string((*ds.groups)[i]));
    out << '\n';
  }
  write_text_file(path, out.str());
}

std::string format_results(const core::CoverageReport& report) {
  core::CoverageReport sorted = report;
  sorted.sort();
  std::ostringstream out;
  out << kResultsHeader << '\n';
  for (const auto& r : sorted.rows) {
    if (r.method.find_first_of(",\"\n") != std::string::npos) {
      throw InvalidInput("method label '" + r.method + "' contains a CSV delimiter");
    }
    out << r.method << ',' << (r.param_b ? format_double(*r.param_b) : "") << ',' << format_double(r.shift) << ','
        << r.trial << ',' << format_double(r.coverage) << ',' << (r.width ? format_double(*r.width) : "") << ','
        << format_double(r.tau) << ',' << format_double(r.level) << '\n';
  }
  return out.str();
}

void write_results(const core::CoverageReport& report, const std::string& path) {
  write_text_file(path, format_results(report));
}

core::CoverageReport read_results(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines.front() != kResultsHeader) {
    throw ParseError(path, 0, "", std::string("header must be exactly '") + kResultsHeader + "'");
  }
  static const char* names[] = {"method", "param_b", "shift", "trial", "coverage", "width", "tau", "level"};
  core::CoverageReport report;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto cells = split_line(lines[i]);
    if (cells.size() != 8) throw ParseError(path, i, "", "expected 8 cells, found " + std::to_string(cells.size()));
    core::CoverageRow r;
    r.method = cells[0];
    if (!cells[1].empty()) r.param_b = parse_double(cells[1], path, i, names[1]);
    r.shift = parse_double(cells[2], path, i, names[2]);
    r.trial = parse_index(cells[3], path, i, names[3]);
    r.coverage = parse_double(cells[4], path, i, names[4]);
    if (!cells[5].empty()) r.width = parse_double(cells[5], path, i, names[5]);
    r.tau = parse_double(cells[6], path, i, names[6]);
    r.level = parse_double(cells[7], path, i, names[7]);
    if (std::isnan(r.coverage)) r.error = "trial failed";
    report.rows.push_back(std::move(r));
  }
  return report;
}

void write_text_file(const std::string& path, const std::string& text) {
  const std::filesystem::path p(path);
  std::error_code ec;
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << text;
  out.flush();
  if (!out) throw IoError(path + ": write failed");
}

}  // namespace clipcp::ingest
