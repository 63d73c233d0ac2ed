#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace emfv {

// Every library failure derives from Error and carries a stable,
// machine-readable code alongside the human message. The C API and the
// service map these codes onto status values and HTTP statuses.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& message)
      : Error("dimension_mismatch", message) {}
};

class InvalidVectorError : public Error {
 public:
  explicit InvalidVectorError(const std::string& message)
      : Error("invalid_vector", message) {}
};

class EmptyGalleryError : public Error {
 public:
  explicit EmptyGalleryError(const std::string& message)
      : Error("empty_gallery", message) {}
};

class DegenerateVectorError : public Error {
 public:
  explicit DegenerateVectorError(const std::string& message)
      : Error("degenerate_vector", message) {}
};

class LayerShapeError : public Error {
 public:
  explicit LayerShapeError(const std::string& message)
      : Error("layer_shape", message) {}
};

class LabelError : public Error {
 public:
  explicit LabelError(const std::string& message)
      : Error("label_out_of_range", message) {}
};

class InvalidArgumentError : public Error {
 public:
  explicit InvalidArgumentError(const std::string& message)
      : Error("invalid_argument", message) {}
};

// Carries the (person, person) pairs whose expanded bands intersect.
class BandCollisionError : public Error {
 public:
  using Pair = std::pair<std::string, std::string>;

  BandCollisionError(std::vector<Pair> pairs, const std::string& message)
      : Error("band_collision", message), pairs_(std::move(pairs)) {}

  const std::vector<Pair>& pairs() const noexcept { return pairs_; }

 private:
  std::vector<Pair> pairs_;
};

class DuplicatePersonError : public Error {
 public:
  explicit DuplicatePersonError(const std::string& message)
      : Error("duplicate_person", message) {}
};

class UnknownPersonError : public Error {
 public:
  explicit UnknownPersonError(const std::string& message)
      : Error("unknown_person", message) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& message)
      : Error("format_error", message) {}
};

class InvariantViolationError : public Error {
 public:
  explicit InvariantViolationError(const std::string& message)
      : Error("invariant_violation", message) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error("io_error", message) {}
};

class SerializationError : public Error {
 public:
  explicit SerializationError(const std::string& message)
      : Error("serialization_error", message) {}
};

}  // namespace emfv
