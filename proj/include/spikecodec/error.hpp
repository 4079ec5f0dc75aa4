#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace spikecodec {

// Base of every error thrown by the library. The CLI maps the subclasses
// onto exit codes (usage 1, data/parse 2, numerical 3).
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Argument outside the operation's domain (value too wide for a field,
// S larger than N*T, bad mu index, ...).
class DomainError : public Error {
public:
  using Error::Error;
};

class ShapeError : public Error {
public:
  using Error::Error;
};

// Reading past the end of a bit or byte stream.
class TruncatedStream : public Error {
public:
  using Error::Error;
};

// Well-sized but inconsistent stream contents.
class CorruptStream : public Error {
public:
  using Error::Error;
};

class ParseError : public Error {
public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

private:
  std::size_t offset_;
};

// Non-finite loss or activations during training.
class NumericalError : public Error {
public:
  using Error::Error;
};

}  // namespace spikecodec
