#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "emfv/feature_vector.hpp"

namespace emfv {

// Opaque, non-empty identity label. One person owns exactly one band.
class PersonId {
 public:
  explicit PersonId(std::string id);

  const std::string& str() const noexcept { return id_; }

  friend auto operator<=>(const PersonId&, const PersonId&) = default;
  friend bool operator==(const PersonId&, const PersonId&) = default;

 private:
  std::string id_;
};

// Labeled enrollment vectors; the partition of the known vectors into one
// pool per person. Value type: mutators return a new gallery.
class Gallery {
 public:
  using Map = std::map<PersonId, std::vector<FeatureVector>>;

  Gallery() = default;

  // Throws DuplicatePersonError, DimensionError, or EmptyGalleryError when
  // `samples` is empty.
  Gallery with_person(const PersonId& person,
                      std::vector<FeatureVector> samples) const;

  const Map& persons() const noexcept { return persons_; }
  bool contains(const PersonId& person) const;
  bool empty() const noexcept { return persons_.empty(); }
  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t sample_count() const noexcept;
  std::vector<FeatureVector> all_vectors() const;

  friend bool operator==(const Gallery&, const Gallery&) = default;

 private:
  Map persons_;
  std::size_t dimension_ = 0;
};

// Closed interval [low, high] of distances to the gallery mean.
struct Band {
  PersonId person;
  double low = 0.0;
  double high = 0.0;

  bool contains(double d) const noexcept { return low <= d && d <= high; }

  friend bool operator==(const Band&, const Band&) = default;
};

struct InBand {
  PersonId person;
  friend bool operator==(const InBand&, const InBand&) = default;
};

// Outside every band; `person` owns the strictly nearest one, `gap` > 0 is
// the distance to its nearest endpoint.
struct NearestBand {
  PersonId person;
  double gap = 0.0;
  friend bool operator==(const NearestBand&, const NearestBand&) = default;
};

// Equidistant (within the tie tolerance) from two adjacent bands. `lower`
// owns the band below the probe distance, `upper` the band above it.
struct AmbiguousTie {
  PersonId lower;
  PersonId upper;
  friend bool operator==(const AmbiguousTie&, const AmbiguousTie&) = default;
};

struct EmptyIndex {
  friend bool operator==(const EmptyIndex&, const EmptyIndex&) = default;
};

using Outcome = std::variant<InBand, NearestBand, AmbiguousTie, EmptyIndex>;

struct ClassificationResult {
  Outcome outcome;
  double distance_to_mean = 0.0;

  friend bool operator==(const ClassificationResult&,
                         const ClassificationResult&) = default;
};

struct Neighbor {
  PersonId person;
  double interval_distance = 0.0;
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

struct IdentifyResult {
  ClassificationResult classification;
  std::vector<Neighbor> matches;
  friend bool operator==(const IdentifyResult&, const IdentifyResult&) = default;
};

struct IndexOptions {
  // Relative widening of each band by its own width on both sides.
  double margin = 0.05;
  // Half-width used when a person's samples all sit at one distance.
  double single_sample_halfwidth = 0.02;
  // Probes within this distance of the midpoint between two adjacent bands
  // are reported as AmbiguousTie.
  double tie_tolerance = 0.0;

  friend bool operator==(const IndexOptions&, const IndexOptions&) = default;
};

enum class MeanPolicy { kFrozen, kRecompute };

// Mean vector plus sorted, pairwise-disjoint bands. Immutable; every
// mutation produces a new index.
class BandedIndex {
 public:
  BandedIndex() = default;

  // Sorts `bands` by low endpoint. Throws BandCollisionError if any two
  // intersect, DuplicatePersonError if a person owns two bands, and
  // InvalidArgumentError for malformed endpoints or options.
  static BandedIndex from_bands(MeanVector mean, std::vector<Band> bands,
                                IndexOptions options = {},
                                std::uint64_t version = 1);

  const MeanVector& mean() const noexcept { return mean_; }
  std::span<const Band> bands() const noexcept { return bands_; }
  std::size_t dimension() const noexcept { return mean_.dimension(); }
  std::uint64_t version() const noexcept { return version_; }
  const IndexOptions& options() const noexcept { return options_; }
  bool empty() const noexcept { return bands_.empty(); }

  const Band* find_band(const PersonId& person) const;

  double distance_to_mean(const FeatureVector& probe) const;

  ClassificationResult classify(const FeatureVector& probe) const;
  ClassificationResult classify_distance(double distance) const;

  // Number of interval comparisons classify performs for this probe.
  std::size_t lookup_cost(const FeatureVector& probe) const;
  std::size_t lookup_cost_distance(double distance) const;

  // Accepts iff the probe's distance lies in the claimed person's band.
  // Throws UnknownPersonError when the claimed person has no band.
  bool authenticate(const PersonId& claimed, const FeatureVector& probe) const;
  bool authenticate_distance(const PersonId& claimed, double distance) const;

  IdentifyResult identify(const FeatureVector& probe,
                          std::size_t max_neighbors) const;
  IdentifyResult identify_distance(double distance,
                                   std::size_t max_neighbors) const;

  // Smallest distance between consecutive bands; infinity with < 2 bands.
  double min_band_gap() const noexcept;

  BandedIndex with_version(std::uint64_t version) const;

  friend bool operator==(const BandedIndex& a, const BandedIndex& b) {
    return a.mean_ == b.mean_ && a.bands_ == b.bands_ &&
           a.options_ == b.options_ && a.version_ == b.version_;
  }

 private:
  struct TieZone {
    double lo;
    double hi;
  };

  struct Located {
    ClassificationResult result;
    std::size_t cell = 0;  // band index owning the probe's Voronoi cell
    std::size_t comparisons = 0;
  };

  void rebuild_zones();
  Located locate(double distance) const;

  MeanVector mean_;
  std::vector<Band> bands_;
  std::vector<TieZone> zones_;  // zones_[j] lies strictly between band j, j+1
  IndexOptions options_;
  std::uint64_t version_ = 0;
};

// Band for one person's distances to the mean: [min - margin*w,
// max + margin*w] with w = max - min, or +/- single_sample_halfwidth when
// w == 0. The low end is clamped at zero.
Band band_from_distances(const PersonId& person,
                         std::span<const double> distances,
                         const IndexOptions& options);

// Throws EmptyGalleryError or BandCollisionError.
BandedIndex build_index(const Gallery& gallery, const IndexOptions& options = {});
BandedIndex build_index(const Gallery& gallery, double margin);

struct Enrollment {
  BandedIndex index;
  Gallery gallery;
  Band band;
};

// Adds a person. On any error the inputs are untouched (they are values).
// kFrozen keeps the mean and inserts one band; kRecompute rebuilds the mean
// and all bands. An empty index is always built from scratch.
Enrollment enroll(const BandedIndex& index, const Gallery& gallery,
                  const PersonId& person, std::vector<FeatureVector> samples,
                  MeanPolicy policy);

std::string to_string(MeanPolicy policy);
MeanPolicy mean_policy_from_string(const std::string& name);

// Human-readable tag for an outcome: "in_band", "nearest_band",
// "ambiguous_tie", "empty_index".
std::string outcome_name(const Outcome& outcome);

}  // namespace emfv
