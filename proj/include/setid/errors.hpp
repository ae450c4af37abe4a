#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace setid {

// Malformed input: bad CSV, rows violating the interval ordering, bad
// configuration values. `line` is 1-based when known, 0 otherwise.
class DataError : public std::invalid_argument {
 public:
  DataError(const std::string& what, std::size_t line = 0)
      : std::invalid_argument(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, int iterations)
      : std::runtime_error(what + " (after " + std::to_string(iterations) + " iterations)"),
        iterations_(iterations) {}
  int iterations() const { return iterations_; }

 private:
  int iterations_;
};

class MissingCellError : public std::runtime_error {
 public:
  explicit MissingCellError(const std::string& key)
      : std::runtime_error("no training observations in quantile cell '" + key + "'"), key_(key) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

// Numerical degeneracy: singular design, probability below the floor,
// projection-set violation.
class DegenerateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IncompleteProfileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace setid
