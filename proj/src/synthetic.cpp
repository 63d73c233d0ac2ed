#include "emfv/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "emfv/errors.hpp"

namespace emfv::synthetic {

namespace {

double l1(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += std::abs(x);
  return s;
}

std::string person_name(std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "p%0*zu", width, i);
  return buf;
}

}  // namespace

DistanceShell::DistanceShell(std::size_t dimension, double center_norm)
    : dimension_(dimension), center_norm_(center_norm) {
  if (dimension < 3) {
    throw InvalidArgumentError("distance shell needs dimension >= 3");
  }
  if (!(center_norm > std::sqrt(0.5) && center_norm < 1.0)) {
    throw InvalidArgumentError("center norm must lie in (1/sqrt(2), 1)");
  }
  const auto n = static_cast<double>(dimension);
  offset_norm_ = std::sqrt(1.0 - center_norm * center_norm);
  box_ = center_norm / std::sqrt(n);
  triples_ = dimension / 3;
  spiky_triples_ = static_cast<std::size_t>(std::ceil(
      offset_norm_ * offset_norm_ / (2.0 * box_ * box_)));
  spiky_triples_ = std::max<std::size_t>(spiky_triples_, 1);
  if (spiky_triples_ > triples_) {
    throw InvalidArgumentError("center norm too small for this dimension");
  }
  const auto t = static_cast<double>(triples_);
  if (2.0 * offset_norm_ / std::sqrt(6.0 * t) > box_) {
    throw InvalidArgumentError("center norm too small for flat offsets");
  }
  center_.assign(dimension, box_);
  min_distance_ =
      offset_norm_ * std::sqrt(2.0 * static_cast<double>(spiky_triples_));
  max_distance_ = offset_norm_ * 4.0 * std::sqrt(t) / std::sqrt(6.0);
}

// Unit-L2 pattern whose every coordinate triple sums to zero: a few
// (1, -1, 0) triples when spiky, (1, 1, -2) in every triple otherwise.
std::vector<double> DistanceShell::pattern(bool spiky,
                                           std::mt19937_64& rng) const {
  std::vector<double> p(dimension_, 0.0);
  std::vector<std::size_t> chosen(triples_);
  std::iota(chosen.begin(), chosen.end(), std::size_t{0});
  std::shuffle(chosen.begin(), chosen.end(), rng);
  if (spiky) chosen.resize(spiky_triples_);
  std::uniform_int_distribution<int> coin(0, 1);
  for (std::size_t t : chosen) {
    std::array<double, 3> vals = spiky ? std::array<double, 3>{1.0, -1.0, 0.0}
                                       : std::array<double, 3>{1.0, 1.0, -2.0};
    std::shuffle(vals.begin(), vals.end(), rng);
    const double sign = coin(rng) ? 1.0 : -1.0;
    for (std::size_t k = 0; k < 3; ++k) p[3 * t + k] = sign * vals[k];
  }
  const double norm = l2_norm(p);
  for (double& v : p) v /= norm;
  return p;
}

std::vector<double> DistanceShell::offset(double distance,
                                          std::mt19937_64& rng) const {
  if (!(distance >= min_distance_ && distance <= max_distance_)) {
    throw InvalidArgumentError(
        "distance " + std::to_string(distance) + " outside shell range [" +
        std::to_string(min_distance_) + ", " + std::to_string(max_distance_) +
        "]");
  }
  std::vector<double> delta(dimension_);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const auto p = pattern(true, rng);
    const auto q = pattern(false, rng);
    auto at = [&](double t) {
      for (std::size_t i = 0; i < dimension_; ++i) {
        delta[i] = (1.0 - t) * p[i] + t * q[i];
      }
      const double norm = l2_norm(delta);
      for (double& v : delta) v *= offset_norm_ / norm;
      return l1(delta);
    };
    double lo = 0.0;
    double hi = 1.0;
    if (at(lo) > distance || at(hi) < distance) continue;
    for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mid == lo || mid == hi) break;
      (at(mid) < distance ? lo : hi) = mid;
    }
    const double got = at(0.5 * (lo + hi));
    const bool inside_box = std::all_of(
        delta.begin(), delta.end(), [&](double v) { return std::abs(v) <= box_; });
    if (inside_box && std::abs(got - distance) < 1e-12) return delta;
  }
  throw InvalidArgumentError("could not place an offset at distance " +
                             std::to_string(distance));
}

FeatureVector DistanceShell::vector(std::span<const double> offset) const {
  std::vector<double> v(dimension_);
  for (std::size_t i = 0; i < dimension_; ++i) {
    v[i] = std::max(0.0, center_[i] + offset[i]);
  }
  return normalize(FeatureVector(std::move(v)));
}

FeatureVector DistanceShell::sample(double distance,
                                    std::mt19937_64& rng) const {
  return vector(offset(distance, rng));
}

std::vector<FeatureVector> DistanceShell::orbit(double distance,
                                                std::size_t count,
                                                std::mt19937_64& rng) const {
  auto delta = offset(distance, rng);
  std::vector<FeatureVector> out;
  if (count == 2) {
    out.push_back(vector(delta));
    for (double& v : delta) v = -v;
    out.push_back(vector(delta));
  } else if (count == 3) {
    for (int turn = 0; turn < 3; ++turn) {
      out.push_back(vector(delta));
      for (std::size_t t = 0; t < triples_; ++t) {
        std::rotate(delta.begin() + 3 * t, delta.begin() + 3 * t + 2,
                    delta.begin() + 3 * t + 3);
      }
    }
  } else {
    throw InvalidArgumentError("orbits have 2 or 3 members");
  }
  return out;
}

Gallery gallery_from_ranges(const DistanceShell& shell,
                            std::span<const PersonRange> persons,
                            std::mt19937_64& rng) {
  Gallery g;
  for (const auto& p : persons) {
    if (p.samples == 0) throw EmptyGalleryError(p.id + " has no samples");
    std::vector<FeatureVector> samples;
    if (p.samples == 1) {
      samples.push_back(shell.sample(p.low, rng));
    } else {
      std::vector<std::size_t> orbits;
      std::size_t left = p.samples;
      if (left % 2 == 1) {
        orbits.push_back(3);
        left -= 3;
      }
      for (; left > 0; left -= 2) orbits.push_back(2);
      std::uniform_real_distribution<double> inside(p.low, p.high);
      for (std::size_t k = 0; k < orbits.size(); ++k) {
        const double d = k == 0 ? p.low : k == 1 ? p.high : inside(rng);
        auto members = shell.orbit(d, orbits[k], rng);
        samples.insert(samples.end(), members.begin(), members.end());
      }
    }
    g = g.with_person(PersonId(p.id), std::move(samples));
  }
  return g;
}

std::vector<PersonRange> reported_ranges(std::size_t samples_per_person) {
  return {{"p1", 0.85, 1.12, samples_per_person},
          {"p2", 1.18, 1.32, samples_per_person},
          {"p3", 0.39, 0.68, samples_per_person}};
}

RandomGallery random_gallery(std::uint64_t seed, std::size_t dimension,
                             std::size_t min_persons, std::size_t max_persons,
                             std::size_t max_samples) {
  const double center_norm =
      dimension < 8 ? 0.9 : dimension < 64 ? 0.95 : 0.99;
  const DistanceShell shell(dimension, center_norm);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> n_persons(min_persons,
                                                       max_persons);
  std::uniform_int_distribution<std::size_t> n_samples(1, max_samples);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const double span = shell.max_distance() - shell.min_distance();
  const double start = shell.min_distance() + 0.02 * span;
  const double usable = 0.96 * span;

  for (std::size_t attempt = 1; attempt <= 1000; ++attempt) {
    const std::size_t persons = n_persons(rng);
    const double slot = usable / static_cast<double>(persons);
    std::vector<std::size_t> slots(persons);
    std::iota(slots.begin(), slots.end(), std::size_t{0});
    std::shuffle(slots.begin(), slots.end(), rng);

    std::vector<PersonRange> ranges;
    for (std::size_t i = 0; i < persons; ++i) {
      const double base = start + slot * static_cast<double>(slots[i]);
      PersonRange r;
      r.id = person_name(i, 2);
      r.low = base + slot * (0.25 + 0.2 * unit(rng));
      r.high = base + slot * (0.55 + 0.2 * unit(rng));
      r.samples = n_samples(rng);
      ranges.push_back(std::move(r));
    }
    IndexOptions options;
    options.single_sample_halfwidth = 0.15 * slot;
    Gallery g = gallery_from_ranges(shell, ranges, rng);
    try {
      BandedIndex idx = build_index(g, options);
      return {std::move(g), std::move(idx), attempt};
    } catch (const BandCollisionError&) {
    }
  }
  throw InvalidArgumentError("no collision-free gallery found for seed " +
                             std::to_string(seed));
}

std::vector<FeatureVector> random_probes(const Gallery& gallery,
                                         std::size_t count,
                                         std::mt19937_64& rng) {
  const auto all = gallery.all_vectors();
  if (all.empty()) throw EmptyGalleryError("no gallery vectors to probe from");
  const std::size_t dim = gallery.dimension();
  std::uniform_int_distribution<std::size_t> pick(0, all.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<FeatureVector> out;
  out.reserve(count);
  std::vector<double> buf(dim);
  while (out.size() < count) {
    const double kind = unit(rng);
    if (kind < 0.2) {
      out.push_back(all[pick(rng)]);
      continue;
    }
    if (kind < 0.85) {
      const auto& a = all[pick(rng)];
      const auto& b = all[pick(rng)];
      const double w = unit(rng);
      for (std::size_t i = 0; i < dim; ++i) buf[i] = w * a[i] + (1.0 - w) * b[i];
    } else {
      for (double& v : buf) v = unit(rng);
    }
    if (l2_norm(buf) == 0.0) continue;
    out.push_back(normalize(FeatureVector(buf)));
  }
  return out;
}

std::vector<Band> random_disjoint_bands(std::size_t m, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> width(0.0, 1.0);
  std::uniform_real_distribution<double> gap(0.01, 1.0);
  std::vector<std::size_t> ids(m);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  std::shuffle(ids.begin(), ids.end(), rng);
  std::vector<Band> bands;
  bands.reserve(m);
  double pos = 0.1 * width(rng);
  for (std::size_t i = 0; i < m; ++i) {
    const double w = width(rng) < 0.05 ? 0.0 : width(rng);
    bands.push_back(Band{PersonId(person_name(ids[i], 6)), pos, pos + w});
    pos += w + gap(rng);
  }
  return bands;
}

LabeledDataset face_like_images(std::size_t classes, std::size_t per_class,
                                std::size_t side, std::uint64_t seed) {
  if (classes == 0 || per_class == 0 || side < 8) {
    throw InvalidArgumentError("need >= 1 class, >= 1 image, side >= 8");
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> shift(-1, 1);
  std::uniform_real_distribution<double> gain(0.85, 1.15);
  std::normal_distribution<double> noise(0.0, 0.03);

  LabeledDataset ds;
  for (std::size_t k = 0; k < classes; ++k) {
    ds.class_names.push_back(person_name(k, 2));
  }
  const auto s = static_cast<double>(side);
  for (std::size_t k = 0; k < classes; ++k) {
    const bool high_eyes = (k & 1u) != 0;
    const bool wide_eyes = (k & 2u) != 0;
    const bool wide_mouth = high_eyes != wide_eyes;
    const double eye_y = (high_eyes ? 0.28 : 0.42) + 0.04 * double(k / 4 % 2);
    const double eye_dx = wide_eyes ? 0.26 : 0.13;
    const double mouth_y = 0.72 - 0.05 * double(k / 8 % 2);
    const double mouth_half = wide_mouth ? 0.25 : 0.1;
    for (std::size_t n = 0; n < per_class; ++n) {
      const int dx = shift(rng);
      const int dy = shift(rng);
      const double g = gain(rng);
      Tensor img(Shape{1, side, side});
      for (std::size_t y = 0; y < side; ++y) {
        for (std::size_t x = 0; x < side; ++x) {
          const double fx = (static_cast<double>(x) - dx + 0.5) / s;
          const double fy = (static_cast<double>(y) - dy + 0.5) / s;
          const double ox = (fx - 0.5) / 0.38;
          const double oy = (fy - 0.5) / 0.46;
          double v = ox * ox + oy * oy <= 1.0 ? 0.65 : 0.1;
          const double eye_r = 1.2 / s;
          for (double ex : {0.5 - eye_dx, 0.5 + eye_dx}) {
            if (std::abs(fx - ex) <= eye_r + 0.5 / s &&
                std::abs(fy - eye_y) <= eye_r + 0.5 / s) {
              v = 0.05;
            }
          }
          if (std::abs(fy - mouth_y) <= 0.6 / s &&
              std::abs(fx - 0.5) <= mouth_half) {
            v = 0.15;
          }
          img.at(0, y, x) = std::clamp(g * v + noise(rng), 0.0, 1.0);
        }
      }
      ds.images.push_back({std::move(img), k});
    }
  }
  return ds;
}

}  // namespace emfv::synthetic
