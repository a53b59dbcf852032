#pragma once

// Exception hierarchy for the conceptneuro library. Everything user-facing
// derives from Error so the CLI can map failures to exit codes uniformly.

#include <stdexcept>
#include <string>

namespace cneuro {

class Error : public std::runtime_error {
 public:
  Error(const std::string& category, const std::string& message)
      : std::runtime_error(category + ": " + message), category_(category) {}

  const std::string& category() const { return category_; }

 private:
  std::string category_;
};

// Malformed input files: bad JSON, bad CSV, missing fields.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& m) : Error("parse-error", m) {}
};

// Structurally valid input that violates a schema rule (duplicate names,
// id gaps, label out of range).
class SchemaError : public Error {
 public:
  explicit SchemaError(const std::string& m) : Error("schema-error", m) {}
};

// Shape/size mismatches between tensors, graphs, or configs.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& m) : Error("dimension-error", m) {}
};

// Numeric values outside their domain (non-finite series, bad ratios).
class InputError : public Error {
 public:
  explicit InputError(const std::string& m) : Error("input-error", m) {}
};

// NaN/Inf produced inside the numeric core.
class NumericFault : public Error {
 public:
  explicit NumericFault(const std::string& m) : Error("numeric-fault", m) {}
};

// Filesystem problems: missing file, unreadable, failed write.
class IoError : public Error {
 public:
  explicit IoError(const std::string& m) : Error("io-error", m) {}
};

// Bad run configuration (unknown provider kind, invalid train config).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& m) : Error("config-error", m) {}
};

// LLM provider transport failures.
class ProviderError : public Error {
 public:
  ProviderError(const std::string& category, const std::string& m)
      : Error(category, m) {}
};

class AuthError : public ProviderError {
 public:
  explicit AuthError(const std::string& m) : ProviderError("auth-error", m) {}
};

class NetworkError : public ProviderError {
 public:
  explicit NetworkError(const std::string& m)
      : ProviderError("network-error", m) {}
};

class HttpStatusError : public ProviderError {
 public:
  HttpStatusError(int status, const std::string& m)
      : ProviderError("http-error", "status " + std::to_string(status) + ": " + m),
        status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

class EmptyGenerationError : public ProviderError {
 public:
  explicit EmptyGenerationError(const std::string& m)
      : ProviderError("empty-generation", m) {}
};

}  // namespace cneuro
