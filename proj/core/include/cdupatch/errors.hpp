#pragma once

#include <stdexcept>
#include <string>

namespace cdupatch {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value lies outside the domain an operation accepts (bad config, bad parameter).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Tensor or image dimensions disagree.
class ShapeError : public ParameterError {
 public:
  using ParameterError::ParameterError;
};

/// A file was readable but its contents do not follow the expected layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A label line could not be parsed.
class ParseError : public FormatError {
 public:
  ParseError(const std::string& file, int line, const std::string& what)
      : FormatError(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

/// One modality of a sample is present on disk and its counterpart is not.
class PairingError : public FormatError {
 public:
  PairingError(const std::string& id, const std::string& what)
      : FormatError("sample '" + id + "': " + what), id_(id) {}
  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// The external detector subprocess broke the frame protocol.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// A detector handle was asked for something it cannot do (e.g. gradients).
class CapabilityError : public Error {
 public:
  using Error::Error;
};

/// Optimisation produced a non-finite value or missed its quality target.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, int step = -1) : Error(what), step_(step) {}
  int step() const noexcept { return step_; }

 private:
  int step_;
};

}  // namespace cdupatch
