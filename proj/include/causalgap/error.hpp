#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace causalgap {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input file does not match the expected columns.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// A single input row could not be parsed or violates a domain.
class RowError : public Error {
 public:
  RowError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// A formula references something that does not exist or repeats a column.
class SpecError : public Error {
 public:
  using Error::Error;
};

// The data cannot support the requested computation (one arm empty, zero
// variance, nothing to impute from, no overlap, ...).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

class RankDeficientError : public Error {
 public:
  explicit RankDeficientError(std::vector<std::string> columns);
  const std::vector<std::string>& columns() const { return columns_; }

 private:
  std::vector<std::string> columns_;
};

// A pipeline stage failed; carries the stage name.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

}  // namespace causalgap
