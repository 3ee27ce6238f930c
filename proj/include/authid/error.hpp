#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace authid {

// Base for every error the library raises. Callers that only need a message
// catch this; the subclasses let tests and the CLI distinguish failure kinds.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CorpusError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  DimensionError(std::size_t expected, std::size_t actual)
      : Error("feature dimension mismatch: expected " + std::to_string(expected) +
              ", got " + std::to_string(actual)),
        expected_(expected),
        actual_(actual) {}

  std::size_t expected() const noexcept { return expected_; }
  std::size_t actual() const noexcept { return actual_; }

 private:
  std::size_t expected_;
  std::size_t actual_;
};

class DivergenceError : public Error {
 public:
  explicit DivergenceError(int epoch)
      : Error("training diverged: non-finite loss at epoch " + std::to_string(epoch)),
        epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

class ConvergenceError : public Error {
 public:
  explicit ConvergenceError(std::int64_t iterations)
      : Error("SMO did not converge after " + std::to_string(iterations) + " iterations"),
        iterations_(iterations) {}
  std::int64_t iterations() const noexcept { return iterations_; }

 private:
  std::int64_t iterations_;
};

// Malformed, truncated or corrupted persisted data.
class FormatError : public Error {
 public:
  using Error::Error;
};

class VersionError : public FormatError {
 public:
  VersionError(std::uint32_t found, std::uint32_t supported)
      : FormatError("unsupported format version " + std::to_string(found) +
                    " (this reader supports version " + std::to_string(supported) + ")"),
        found_(found),
        supported_(supported) {}
  std::uint32_t found() const noexcept { return found_; }
  std::uint32_t supported() const noexcept { return supported_; }

 private:
  std::uint32_t found_;
  std::uint32_t supported_;
};

}  // namespace authid
