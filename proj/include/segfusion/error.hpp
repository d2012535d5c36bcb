#pragma once

#include <stdexcept>
#include <string>

namespace segfusion {

// Base class for every error raised by the library. The stage tag names the
// pipeline stage (or file-format reader) that failed, so the CLI can report
// "stage: message" diagnostics.
class Error : public std::runtime_error {
 public:
  Error(std::string stage, const std::string& message)
      : std::runtime_error(stage + ": " + message),
        stage_(std::move(stage)),
        message_(message) {}

  const std::string& stage() const noexcept { return stage_; }
  const std::string& message() const noexcept { return message_; }

 private:
  std::string stage_;
  std::string message_;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class UnknownLabel : public Error {
 public:
  using Error::Error;
};

class DegenerateGeometry : public Error {
 public:
  using Error::Error;
};

class InsufficientInliers : public Error {
 public:
  using Error::Error;
};

}  // namespace segfusion
