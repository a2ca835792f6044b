#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace clipcp {

/// Precondition violated by a caller-supplied value.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed CSV content. `row` is the 1-based data row (header excluded),
/// 0 when the problem is in the header itself.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::string path, std::size_t row, std::string column, const std::string& what)
      : std::runtime_error(path + ": row " + std::to_string(row) + ", column '" + column + "': " + what),
        path_(std::move(path)),
        row_(row),
        column_(std::move(column)) {}

  const std::string& path() const { return path_; }
  std::size_t row() const { return row_; }
  const std::string& column() const { return column_; }

 private:
  std::string path_;
  std::size_t row_;
  std::string column_;
};

/// Schema violation in a run configuration; `key_path` is dotted, e.g. "sizes.m_cal".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key_path, const std::string& what)
      : std::runtime_error(key_path.empty() ? what : key_path + ": " + what), key_path_(std::move(key_path)) {}

  const std::string& key_path() const { return key_path_; }

 private:
  std::string key_path_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace clipcp
