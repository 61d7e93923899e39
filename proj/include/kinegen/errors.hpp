#pragma once

#include <stdexcept>
#include <string>

namespace kinegen {

// Base class for all library errors. Subcommands map these to exit code 1.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ParseError : public Error {
public:
  ParseError(const std::string& msg, std::size_t offset = 0)
      : Error(msg + " (offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const { return offset_; }

private:
  std::size_t offset_;
};

class VocabularyError : public ParseError {
public:
  using ParseError::ParseError;
};

class InvariantViolation : public Error {
public:
  InvariantViolation(const std::string& subject, const std::string& reason)
      : Error(subject + ": " + reason), subject_(subject) {}
  const std::string& subject() const { return subject_; }

private:
  std::string subject_;
};

class UnknownKeypointError : public Error {
public:
  explicit UnknownKeypointError(const std::string& name)
      : Error("unknown keypoint: " + name), name_(name) {}
  const std::string& name() const { return name_; }

private:
  std::string name_;
};

class UnknownReferenceError : public Error {
public:
  using Error::Error;
};

class JointLimitError : public Error {
public:
  using Error::Error;
};

class ZeroAxisError : public Error {
public:
  ZeroAxisError() : Error("axis norm below 1e-9") {}
};

class IoError : public Error {
public:
  using Error::Error;
};

class FormatVersionMismatch : public Error {
public:
  using Error::Error;
};

}  // namespace kinegen
