#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace emfv {

inline constexpr std::size_t kDefaultDimension = 256;

// A Euclidean-measurable feature vector: the only representation of a
// biometric that the index ever sees or stores. Entries are finite and
// nonnegative (they come out of a ReLU).
class FeatureVector {
 public:
  // Throws InvalidVectorError on empty input, negative or non-finite entries.
  explicit FeatureVector(std::vector<double> values);

  static FeatureVector zeros(std::size_t dimension = kDefaultDimension);

  std::size_t dimension() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;

 private:
  std::vector<double> values_;
};

// Coordinate-wise mean of a gallery. Entries are finite but, unlike feature
// vectors, are not required to be integral or to come from any one sample.
class MeanVector {
 public:
  MeanVector() = default;
  MeanVector(std::vector<double> values, std::size_t source_count);

  std::size_t dimension() const noexcept { return values_.size(); }
  std::size_t source_count() const noexcept { return source_count_; }
  std::span<const double> values() const noexcept { return values_; }
  bool empty() const noexcept { return values_.empty(); }

  friend bool operator==(const MeanVector&, const MeanVector&) = default;

 private:
  std::vector<double> values_;
  std::size_t source_count_ = 0;
};

// Sum of absolute coordinate differences, accumulated left to right.
// Throws DimensionError when the lengths differ.
double l1_distance(std::span<const double> x, std::span<const double> y);
double l1_distance(const FeatureVector& x, const FeatureVector& y);
double l1_distance(const MeanVector& mean, const FeatureVector& y);

// Throws EmptyGalleryError for an empty set, DimensionError for mixed lengths.
MeanVector mean_vector(std::span<const FeatureVector> vectors);

// Scales to unit L2 length. Throws DegenerateVectorError for the zero vector.
FeatureVector normalize(const FeatureVector& x);

double l2_norm(std::span<const double> x);

}  // namespace emfv
