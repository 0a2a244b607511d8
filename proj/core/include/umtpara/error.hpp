#pragma once

#include <stdexcept>
#include <string>

namespace umtpara {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input data that cannot be used (empty corpus, bad rows, too few points).
class InputError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Operand shapes that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN or infinity where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration; `field` is a dotted path such as "umt.steps".
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

// A pipeline stage needs an artifact that an upstream stage has not produced.
class MissingArtifactError : public Error {
 public:
  MissingArtifactError(std::string stage, const std::string& path)
      : Error("missing artifact " + path + " (run stage '" + stage + "' first)"),
        stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

}  // namespace umtpara
