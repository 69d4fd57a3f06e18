#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace duet {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed SMF header chunk.
class HeaderError : public Error {
 public:
  HeaderError(const std::string& what, std::size_t offset)
      : Error(what + " (byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Track chunk shorter than its declared length.
class TruncationError : public Error {
 public:
  TruncationError(const std::string& what, std::size_t offset)
      : Error(what + " (byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Invalid event stream, e.g. running status with no prior status byte.
class EventError : public Error {
 public:
  EventError(const std::string& what, std::size_t offset)
      : Error(what + " (byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Beat value not representable at the chosen ticks-per-quarter resolution.
class QuantizationError : public Error {
 public:
  using Error::Error;
};

/// Note list violates encoding preconditions (negative onset/duration).
class EncodingError : public Error {
 public:
  using Error::Error;
};

/// Token sequence violates the word-class grammar.
class GrammarError : public Error {
 public:
  GrammarError(const std::string& what, std::size_t token_index)
      : Error(what + " (token index " + std::to_string(token_index) + ")"),
        token_index_(token_index) {}
  std::size_t token_index() const { return token_index_; }

 private:
  std::size_t token_index_;
};

/// Matrix dimensions inconsistent with the requested operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Position or id outside the configured bounds.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Training loss became NaN/Inf.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Metric input unusable (e.g. empty reference).
class MetricError : public Error {
 public:
  using Error::Error;
};

/// Candidate/reference ids do not line up.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

/// Operation on an already-finished decode hypothesis.
class StateError : public Error {
 public:
  using Error::Error;
};

/// A stage produced no usable output (e.g. fewer than two tracks).
class EmptyResult : public Error {
 public:
  using Error::Error;
};

}  // namespace duet
