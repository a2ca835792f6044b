#pragma once

// CSV datasets in, coverage results out.

#include <cstddef>
#include <string>
#include <vector>

#include "clipcp/core.hpp"
#include "clipcp/synth.hpp"

namespace clipcp::ingest {

/// Column layout of a dataset file: features x0..x{d-1}, then optional
/// `y`, `score` and `group` columns. Columns may appear in any order.
struct CsvSchema {
  std::vector<std::string> features;
  bool label = false;
  bool score = false;
  bool group = false;

  static CsvSchema with_features(std::size_t d, bool label = false, bool score = false, bool group = false);
  std::vector<std::string> columns() const;
  void validate() const;
};

synth::GeneratedDataset read_dataset(const std::string& path, const CsvSchema& schema);
void write_dataset(const synth::GeneratedDataset& ds, const std::string& path);

/// The exact results header.
inline constexpr const char* kResultsHeader = "method,param_b,shift,trial,coverage,width,tau,level";

/// %.17g, with inf/-inf/nan spelled out.
std::string format_double(double v);
double parse_double(const std::string& cell, const std::string& path, std::size_t row, const std::string& column);

std::string format_results(const core::CoverageReport& report);
void write_results(const core::CoverageReport& report, const std::string& path);
core::CoverageReport read_results(const std::string& path);

/// Writes `text` to `path`, creating parent directories.
void write_text_file(const std::string& path, const std::string& text);

}  // namespace clipcp::ingest
