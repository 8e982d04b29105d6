#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace agvp {

/// Base of every error raised by the library. `kind()` is a stable tag used by
/// the CLI when it reports structured failures.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

struct StructuralError : Error {
  explicit StructuralError(const std::string& m) : Error("structural", m) {}
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& m) : Error("validation", m) {}
};

struct IoError : Error {
  explicit IoError(const std::string& m) : Error("io", m) {}
};

struct ParseError : Error {
  ParseError(std::size_t line, const std::string& m)
      : Error("parse", "line " + std::to_string(line) + ": " + m), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error("config", m) {}
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& m) : Error("shape", m) {}
};

/// A protocol produced an empty query or gallery partition.
struct EmptyPartitionError : Error {
  explicit EmptyPartitionError(const std::string& m) : Error("empty_partition", m) {}
};

struct CheckpointError : Error {
  explicit CheckpointError(const std::string& m) : Error("checkpoint", m) {}
};

struct UnsupportedInputError : Error {
  explicit UnsupportedInputError(const std::string& m) : Error("unsupported_input", m) {}
};

struct SamplerError : Error {
  explicit SamplerError(const std::string& m) : Error("sampler", m) {}
};

}  // namespace agvp
