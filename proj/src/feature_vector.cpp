#include "emfv/feature_vector.hpp"

#include <cmath>
#include <string>

#include "emfv/errors.hpp"

namespace emfv {

FeatureVector::FeatureVector(std::vector<double> values)
    : values_(std::move(values)) {
  if (values_.empty()) {
    throw InvalidVectorError("feature vector must have at least one entry");
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const double v = values_[i];
    if (!std::isfinite(v) || v < 0.0) {
      throw InvalidVectorError("feature vector entry " + std::to_string(i) +
                               " is negative or not finite");
    }
  }
}

FeatureVector FeatureVector::zeros(std::size_t dimension) {
  return FeatureVector(std::vector<double>(dimension, 0.0));
}

MeanVector::MeanVector(std::vector<double> values, std::size_t source_count)
    : values_(std::move(values)), source_count_(source_count) {
  if (values_.empty() || source_count_ == 0) {
    throw EmptyGalleryError("mean vector needs at least one source vector");
  }
  for (double v : values_) {
    if (!std::isfinite(v)) {
      throw InvalidVectorError("mean vector entries must be finite");
    }
  }
}

double l1_distance(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw DimensionError("cannot measure distance between dimension " +
                         std::to_string(x.size()) + " and " +
                         std::to_string(y.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sum += std::abs(x[i] - y[i]);
  return sum;
}

double l1_distance(const FeatureVector& x, const FeatureVector& y) {
  return l1_distance(x.values(), y.values());
}

double l1_distance(const MeanVector& mean, const FeatureVector& y) {
  return l1_distance(mean.values(), y.values());
}

MeanVector mean_vector(std::span<const FeatureVector> vectors) {
  if (vectors.empty()) {
    throw EmptyGalleryError("mean of an empty set of vectors");
  }
  const std::size_t dim = vectors.front().dimension();
  std::vector<double> sum(dim, 0.0);
  for (const auto& v : vectors) {
    if (v.dimension() != dim) {
      throw DimensionError("mixed dimensions in mean: " + std::to_string(dim) +
                           " vs " + std::to_string(v.dimension()));
    }
    for (std::size_t i = 0; i < dim; ++i) sum[i] += v[i];
  }
  const auto n = static_cast<double>(vectors.size());
  for (double& s : sum) s /= n;
  return MeanVector(std::move(sum), vectors.size());
}

double l2_norm(std::span<const double> x) {
  double sq = 0.0;
  for (double v : x) sq += v * v;
  return std::sqrt(sq);
}

FeatureVector normalize(const FeatureVector& x) {
  const double norm = l2_norm(x.values());
  if (norm == 0.0) {
    throw DegenerateVectorError("cannot normalize the all-zero vector");
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  for (double& v : out) v /= norm;
  return FeatureVector(std::move(out));
}

}  // namespace emfv
