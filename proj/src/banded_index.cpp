#include "emfv/banded_index.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "emfv/errors.hpp"

namespace emfv {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void validate_options(const IndexOptions& o) {
  if (!std::isfinite(o.margin) || o.margin < 0.0) {
    throw InvalidArgumentError("margin must be finite and nonnegative");
  }
  if (!std::isfinite(o.single_sample_halfwidth) ||
      o.single_sample_halfwidth <= 0.0) {
    throw InvalidArgumentError("single-sample half-width must be positive");
  }
  if (!std::isfinite(o.tie_tolerance) || o.tie_tolerance < 0.0) {
    throw InvalidArgumentError("tie tolerance must be finite and nonnegative");
  }
}

void validate_distance(double d) {
  if (!std::isfinite(d) || d < 0.0) {
    throw InvalidArgumentError("distance to mean must be finite and >= 0");
  }
}

// Bands must already be sorted by low endpoint.
std::vector<BandCollisionError::Pair> overlapping_pairs(
    std::span<const Band> sorted) {
  std::vector<BandCollisionError::Pair> pairs;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    for (std::size_t j = i + 1;
         j < sorted.size() && sorted[j].low <= sorted[i].high; ++j) {
      pairs.emplace_back(sorted[i].person.str(), sorted[j].person.str());
    }
  }
  return pairs;
}

[[noreturn]] void throw_collision(std::vector<BandCollisionError::Pair> pairs) {
  std::ostringstream msg;
  msg << "bands overlap:";
  for (const auto& [a, b] : pairs) msg << " (" << a << ", " << b << ")";
  throw BandCollisionError(std::move(pairs), msg.str());
}

}  // namespace

PersonId::PersonId(std::string id) : id_(std::move(id)) {
  if (id_.empty()) throw InvalidArgumentError("person id must not be empty");
}

Gallery Gallery::with_person(const PersonId& person,
                             std::vector<FeatureVector> samples) const {
  if (samples.empty()) {
    throw EmptyGalleryError("person " + person.str() + " has no samples");
  }
  if (contains(person)) {
    throw DuplicatePersonError("person " + person.str() +
                               " is already enrolled");
  }
  const std::size_t dim = empty() ? samples.front().dimension() : dimension_;
  for (const auto& s : samples) {
    if (s.dimension() != dim) {
      throw DimensionError("sample dimension " +
                           std::to_string(s.dimension()) +
                           " does not match gallery dimension " +
                           std::to_string(dim));
    }
  }
  Gallery next = *this;
  next.dimension_ = dim;
  next.persons_.emplace(person, std::move(samples));
  return next;
}

bool Gallery::contains(const PersonId& person) const {
  return persons_.find(person) != persons_.end();
}

std::size_t Gallery::sample_count() const noexcept {
  std::size_t n = 0;
  for (const auto& [_, samples] : persons_) n += samples.size();
  return n;
}

std::vector<FeatureVector> Gallery::all_vectors() const {
  std::vector<FeatureVector> out;
  out.reserve(sample_count());
  for (const auto& [_, samples] : persons_) {
    out.insert(out.end(), samples.begin(), samples.end());
  }
  return out;
}

BandedIndex BandedIndex::from_bands(MeanVector mean, std::vector<Band> bands,
                                    IndexOptions options,
                                    std::uint64_t version) {
  validate_options(options);
  if (!bands.empty() && mean.empty()) {
    throw InvalidArgumentError("an index with bands needs a mean vector");
  }
  std::set<PersonId> seen;
  for (const auto& b : bands) {
    if (!std::isfinite(b.low) || !std::isfinite(b.high) || b.low < 0.0 ||
        b.low > b.high) {
      throw InvalidArgumentError("band of " + b.person.str() +
                                 " must satisfy 0 <= low <= high");
    }
    if (!seen.insert(b.person).second) {
      throw DuplicatePersonError("person " + b.person.str() +
                                 " owns more than one band");
    }
  }
  std::sort(bands.begin(), bands.end(), [](const Band& x, const Band& y) {
    return x.low < y.low || (x.low == y.low && x.person < y.person);
  });
  if (auto pairs = overlapping_pairs(bands); !pairs.empty()) {
    throw_collision(std::move(pairs));
  }

  BandedIndex idx;
  idx.mean_ = std::move(mean);
  idx.bands_ = std::move(bands);
  idx.options_ = options;
  idx.version_ = version;
  idx.rebuild_zones();
  return idx;
}

void BandedIndex::rebuild_zones() {
  zones_.clear();
  if (bands_.size() < 2) return;
  zones_.reserve(bands_.size() - 1);
  const double tau = options_.tie_tolerance;
  for (std::size_t j = 0; j + 1 < bands_.size(); ++j) {
    const double below = bands_[j].high;
    const double above = bands_[j + 1].low;
    const double mid = (below + above) / 2.0;
    // Clip to the open gap so a band's own points never read as ties.
    zones_.push_back({std::max(mid - tau, std::nextafter(below, kInf)),
                      std::min(mid + tau, std::nextafter(above, -kInf))});
  }
}

const Band* BandedIndex::find_band(const PersonId& person) const {
  auto it = std::find_if(bands_.begin(), bands_.end(),
                         [&](const Band& b) { return b.person == person; });
  return it == bands_.end() ? nullptr : &*it;
}

double BandedIndex::distance_to_mean(const FeatureVector& probe) const {
  if (probe.dimension() != dimension()) {
    throw DimensionError("probe dimension " +
                         std::to_string(probe.dimension()) +
                         " does not match index dimension " +
                         std::to_string(dimension()));
  }
  return l1_distance(mean_, probe);
}

// Binary search over the tie zones picks the band whose cell holds the
// distance (<= ceil(log2 m) comparisons), then at most two endpoint
// comparisons settle in-band versus nearest-band.
BandedIndex::Located BandedIndex::locate(double d) const {
  Located loc{{EmptyIndex{}, d}};
  if (bands_.empty()) return loc;

  std::size_t lo = 0;
  std::size_t hi = zones_.size();
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    ++loc.comparisons;
    if (d < zones_[mid].lo) {
      hi = mid;
    } else if (d > zones_[mid].hi) {
      lo = mid + 1;
    } else {
      loc.cell = mid;
      loc.result.outcome =
          AmbiguousTie{bands_[mid].person, bands_[mid + 1].person};
      return loc;
    }
  }

  loc.cell = lo;
  const Band& band = bands_[lo];
  ++loc.comparisons;
  if (d < band.low) {
    loc.result.outcome = NearestBand{band.person, band.low - d};
    return loc;
  }
  ++loc.comparisons;
  if (d > band.high) {
    loc.result.outcome = NearestBand{band.person, d - band.high};
    return loc;
  }
  loc.result.outcome = InBand{band.person};
  return loc;
}

ClassificationResult BandedIndex::classify(const FeatureVector& probe) const {
  if (bands_.empty()) return {EmptyIndex{}, 0.0};
  return locate(distance_to_mean(probe)).result;
}

ClassificationResult BandedIndex::classify_distance(double distance) const {
  validate_distance(distance);
  return locate(distance).result;
}

std::size_t BandedIndex::lookup_cost(const FeatureVector& probe) const {
  if (bands_.empty()) return 0;
  return locate(distance_to_mean(probe)).comparisons;
}

std::size_t BandedIndex::lookup_cost_distance(double distance) const {
  validate_distance(distance);
  return locate(distance).comparisons;
}

bool BandedIndex::authenticate(const PersonId& claimed,
                               const FeatureVector& probe) const {
  const Band* band = find_band(claimed);
  if (band == nullptr) {
    throw UnknownPersonError("person " + claimed.str() + " is not enrolled");
  }
  return band->contains(distance_to_mean(probe));
}

bool BandedIndex::authenticate_distance(const PersonId& claimed,
                                        double distance) const {
  validate_distance(distance);
  const Band* band = find_band(claimed);
  if (band == nullptr) {
    throw UnknownPersonError("person " + claimed.str() + " is not enrolled");
  }
  return band->contains(distance);
}

IdentifyResult BandedIndex::identify(const FeatureVector& probe,
                                     std::size_t max_neighbors) const {
  if (bands_.empty()) return {{EmptyIndex{}, 0.0}, {}};
  return identify_distance(distance_to_mean(probe), max_neighbors);
}

IdentifyResult BandedIndex::identify_distance(double d,
                                              std::size_t max_neighbors) const {
  validate_distance(d);
  if (max_neighbors == 0) {
    throw InvalidArgumentError("max_neighbors must be positive");
  }
  const Located loc = locate(d);
  IdentifyResult out{loc.result, {}};
  if (bands_.empty()) return out;

  // Signed cursors walking outward from the located cell.
  std::ptrdiff_t below = static_cast<std::ptrdiff_t>(loc.cell) - 1;
  std::ptrdiff_t above = static_cast<std::ptrdiff_t>(loc.cell) + 1;
  auto& matches = out.matches;

  if (const auto* in = std::get_if<InBand>(&loc.result.outcome)) {
    matches.push_back({in->person, 0.0});
  } else if (const auto* near = std::get_if<NearestBand>(&loc.result.outcome)) {
    matches.push_back({near->person, near->gap});
  } else {
    const Band& lower = bands_[loc.cell];
    const Band& upper = bands_[loc.cell + 1];
    Neighbor a{lower.person, d - lower.high};
    Neighbor b{upper.person, upper.low - d};
    if (b.person < a.person) std::swap(a, b);
    matches.push_back(std::move(a));
    matches.push_back(std::move(b));
    above = static_cast<std::ptrdiff_t>(loc.cell) + 2;
  }

  const auto m = static_cast<std::ptrdiff_t>(bands_.size());
  auto gap_below = [&] { return below >= 0 ? d - bands_[below].high : kInf; };
  auto gap_above = [&] { return above < m ? bands_[above].low - d : kInf; };

  std::vector<Neighbor> group;
  while (matches.size() < max_neighbors && (below >= 0 || above < m)) {
    const double g = std::min(gap_below(), gap_above());
    // Equal gaps are ordered by person id, whichever side they came from.
    group.clear();
    while (below >= 0 && gap_below() == g) {
      group.push_back({bands_[below].person, g});
      --below;
    }
    while (above < m && gap_above() == g) {
      group.push_back({bands_[above].person, g});
      ++above;
    }
    std::sort(group.begin(), group.end(),
              [](const Neighbor& x, const Neighbor& y) {
                return x.person < y.person;
              });
    matches.insert(matches.end(), group.begin(), group.end());
  }
  if (matches.size() > max_neighbors) {
    matches.erase(matches.begin() + static_cast<std::ptrdiff_t>(max_neighbors), matches.end());
  }
  return out;
}

double BandedIndex::min_band_gap() const noexcept {
  double gap = kInf;
  for (std::size_t j = 0; j + 1 < bands_.size(); ++j) {
    gap = std::min(gap, bands_[j + 1].low - bands_[j].high);
  }
  return gap;
}

BandedIndex BandedIndex::with_version(std::uint64_t version) const {
  BandedIndex copy = *this;
  copy.version_ = version;
  return copy;
}

Band band_from_distances(const PersonId& person,
                         std::span<const double> distances,
                         const IndexOptions& options) {
  if (distances.empty()) {
    throw EmptyGalleryError("person " + person.str() + " has no samples");
  }
  const auto [lo_it, hi_it] =
      std::minmax_element(distances.begin(), distances.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  const double width = hi - lo;
  const double pad = width == 0.0 ? options.single_sample_halfwidth
                                  : options.margin * width;
  return Band{person, std::max(0.0, lo - pad), hi + pad};
}

BandedIndex build_index(const Gallery& gallery, const IndexOptions& options) {
  if (gallery.empty()) {
    throw EmptyGalleryError("cannot build an index from an empty gallery");
  }
  validate_options(options);
  const auto all = gallery.all_vectors();
  MeanVector mean = mean_vector(all);

  std::vector<Band> bands;
  bands.reserve(gallery.persons().size());
  std::vector<double> distances;
  for (const auto& [person, samples] : gallery.persons()) {
    distances.clear();
    for (const auto& s : samples) distances.push_back(l1_distance(mean, s));
    bands.push_back(band_from_distances(person, distances, options));
  }
  return BandedIndex::from_bands(std::move(mean), std::move(bands), options, 1);
}

BandedIndex build_index(const Gallery& gallery, double margin) {
  IndexOptions options;
  options.margin = margin;
  return build_index(gallery, options);
}

Enrollment enroll(const BandedIndex& index, const Gallery& gallery,
                  const PersonId& person, std::vector<FeatureVector> samples,
                  MeanPolicy policy) {
  if (!index.empty() && !samples.empty() &&
      samples.front().dimension() != index.dimension()) {
    throw DimensionError("sample dimension " +
                         std::to_string(samples.front().dimension()) +
                         " does not match index dimension " +
                         std::to_string(index.dimension()));
  }
  if (index.find_band(person) != nullptr) {
    throw DuplicatePersonError("person " + person.str() +
                               " is already enrolled");
  }
  Gallery next_gallery = gallery.with_person(person, samples);
  const std::uint64_t next_version = index.version() + 1;

  if (index.empty() || policy == MeanPolicy::kRecompute) {
    BandedIndex rebuilt =
        build_index(next_gallery, index.options()).with_version(next_version);
    Band band = *rebuilt.find_band(person);
    return {std::move(rebuilt), std::move(next_gallery), std::move(band)};
  }

  std::vector<double> distances;
  distances.reserve(samples.size());
  for (const auto& s : samples) distances.push_back(index.distance_to_mean(s));
  Band band = band_from_distances(person, distances, index.options());

  std::vector<Band> bands(index.bands().begin(), index.bands().end());
  bands.push_back(band);
  BandedIndex next = BandedIndex::from_bands(index.mean(), std::move(bands),
                                             index.options(), next_version);
  return {std::move(next), std::move(next_gallery), std::move(band)};
}

std::string to_string(MeanPolicy policy) {
  return policy == MeanPolicy::kFrozen ? "frozen" : "recompute";
}

MeanPolicy mean_policy_from_string(const std::string& name) {
  if (name == "frozen") return MeanPolicy::kFrozen;
  if (name == "recompute") return MeanPolicy::kRecompute;
  throw InvalidArgumentError("unknown mean policy '" + name +
                             "' (expected frozen or recompute)");
}

std::string outcome_name(const Outcome& outcome) {
  switch (outcome.index()) {
    case 0:
      return "in_band";
    case 1:
      return "nearest_band";
    case 2:
      return "ambiguous_tie";
    default:
      return "empty_index";
  }
}

}  // namespace emfv
