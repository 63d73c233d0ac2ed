#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "emfv/banded_index.hpp"
#include "emfv/store.hpp"

// Deterministic fixture generators shared by tests, the acceptance suite and
// the CLI's bench and synthetic-training paths.
namespace emfv::synthetic {

// Unit-L2, nonnegative vectors m + delta at an exact L1 distance from a
// fixed center m = (c/sqrt(n), ..., c/sqrt(n)). Every delta is orthogonal to
// m, has L2 norm sqrt(1 - c^2) and zero sum within each coordinate triple,
// so the orbits {delta, -delta} and {delta, P delta, P^2 delta} (P cycling
// each triple) average exactly to m.
class DistanceShell {
 public:
  explicit DistanceShell(std::size_t dimension, double center_norm = 0.99);

  std::size_t dimension() const noexcept { return dimension_; }
  std::span<const double> center() const noexcept { return center_; }
  double min_distance() const noexcept { return min_distance_; }
  double max_distance() const noexcept { return max_distance_; }

  // Offset with ||delta||_1 == distance (to ~1e-12). Throws
  // InvalidArgumentError outside [min_distance, max_distance].
  std::vector<double> offset(double distance, std::mt19937_64& rng) const;

  FeatureVector vector(std::span<const double> offset) const;
  FeatureVector sample(double distance, std::mt19937_64& rng) const;

  // `count` vectors at one distance whose offsets sum to zero; count must
  // be 2 or 3.
  std::vector<FeatureVector> orbit(double distance, std::size_t count,
                                   std::mt19937_64& rng) const;

 private:
  std::vector<double> pattern(bool spiky, std::mt19937_64& rng) const;

  std::size_t dimension_;
  double center_norm_;
  double offset_norm_;
  double box_;
  std::size_t triples_;
  std::size_t spiky_triples_;
  std::vector<double> center_;
  double min_distance_;
  double max_distance_;
};

struct PersonRange {
  std::string id;
  double low = 0.0;
  double high = 0.0;
  std::size_t samples = 2;
};

// Samples for each person at distances spanning [low, high], both endpoints
// included. With every sample count >= 2 the gallery mean equals the shell
// center up to rounding.
Gallery gallery_from_ranges(const DistanceShell& shell,
                            std::span<const PersonRange> persons,
                            std::mt19937_64& rng);

// The three reported band ranges: p3 [.39,.68], p1 [.85,1.12],
// p2 [1.18,1.32].
std::vector<PersonRange> reported_ranges(std::size_t samples_per_person = 20);

struct RandomGallery {
  Gallery gallery;
  BandedIndex index;
  std::size_t attempts = 0;
};

// A gallery of [min_persons, max_persons] persons with 1..max_samples
// samples each whose bands do not collide. Draws are retried (counts
// included) until build_index succeeds.
RandomGallery random_gallery(std::uint64_t seed, std::size_t dimension,
                             std::size_t min_persons = 2,
                             std::size_t max_persons = 50,
                             std::size_t max_samples = 20);

// Gallery samples, blends of two gallery samples, and uniform random
// vectors, all unit-L2.
std::vector<FeatureVector> random_probes(const Gallery& gallery,
                                         std::size_t count,
                                         std::mt19937_64& rng);

// m disjoint bands with random widths and gaps, ids "p0000"...; sorted.
std::vector<Band> random_disjoint_bands(std::size_t m, std::mt19937_64& rng);

// Greyscale "faces": two eyes and a mouth whose placement and shape depend
// on the class, jittered by position, brightness and pixel noise.
LabeledDataset face_like_images(std::size_t classes, std::size_t per_class,
                                std::size_t side, std::uint64_t seed);

}  // namespace emfv::synthetic
