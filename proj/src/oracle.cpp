#include "emfv/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "emfv/errors.hpp"

namespace emfv::oracle {

namespace {

// Deliberately separate from emfv::l1_distance.
double scan_distance(std::span<const double> a, std::span<const double> b) {
  double total = 0.0;
  for (std::size_t i = 0; i != a.size(); i++) {
    const double diff = a[i] - b[i];
    total += diff < 0 ? -diff : diff;
  }
  return total;
}

double interval_distance(const Band& band, double d) {
  if (d < band.low) return band.low - d;
  if (d > band.high) return d - band.high;
  return 0.0;
}

std::string fmt(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

}  // namespace

ClassificationResult linear_scan_classify_distance(std::span<const Band> bands,
                                                   double d,
                                                   double tie_tolerance) {
  ClassificationResult result{EmptyIndex{}, d};
  if (bands.empty()) return result;

  const Band* below = nullptr;  // largest high < d
  const Band* above = nullptr;  // smallest low > d
  for (const Band& band : bands) {
    if (band.low <= d && d <= band.high) {
      result.outcome = InBand{band.person};
      return result;
    }
    if (band.high < d && (below == nullptr || band.high > below->high)) {
      below = &band;
    }
    if (band.low > d && (above == nullptr || band.low < above->low)) {
      above = &band;
    }
  }

  if (below == nullptr) {
    result.outcome = NearestBand{above->person, above->low - d};
  } else if (above == nullptr) {
    result.outcome = NearestBand{below->person, d - below->high};
  } else {
    const double mid = (below->high + above->low) / 2.0;
    if (d >= mid - tie_tolerance && d <= mid + tie_tolerance) {
      result.outcome = AmbiguousTie{below->person, above->person};
    } else if (d < mid) {
      result.outcome = NearestBand{below->person, d - below->high};
    } else {
      result.outcome = NearestBand{above->person, above->low - d};
    }
  }
  return result;
}

ClassificationResult linear_scan_classify(const Gallery& gallery,
                                          const MeanVector& mean,
                                          std::span<const Band> bands,
                                          const FeatureVector& probe,
                                          double tie_tolerance) {
  if (bands.empty()) return {EmptyIndex{}, 0.0};
  if (probe.dimension() != mean.dimension() ||
      (!gallery.empty() && gallery.dimension() != probe.dimension())) {
    throw DimensionError("probe dimension does not match the gallery");
  }
  const double d = scan_distance(mean.values(), probe.values());
  return linear_scan_classify_distance(bands, d, tie_tolerance);
}

IdentifyResult linear_scan_identify_distance(std::span<const Band> bands,
                                             double d,
                                             std::size_t max_neighbors,
                                             double tie_tolerance) {
  IdentifyResult out{linear_scan_classify_distance(bands, d, tie_tolerance),
                     {}};
  if (bands.empty()) return out;

  std::vector<PersonId> leading;
  const Outcome& o = out.classification.outcome;
  if (const auto* in = std::get_if<InBand>(&o)) {
    leading.push_back(in->person);
  } else if (const auto* near = std::get_if<NearestBand>(&o)) {
    leading.push_back(near->person);
  } else if (const auto* tie = std::get_if<AmbiguousTie>(&o)) {
    leading.push_back(std::min(tie->lower, tie->upper));
    leading.push_back(std::max(tie->lower, tie->upper));
  }

  std::vector<Neighbor> rest;
  for (const Band& band : bands) {
    Neighbor n{band.person, interval_distance(band, d)};
    if (std::find(leading.begin(), leading.end(), band.person) !=
        leading.end()) {
      continue;
    }
    rest.push_back(std::move(n));
  }
  std::sort(rest.begin(), rest.end(), [](const Neighbor& a, const Neighbor& b) {
    if (a.interval_distance != b.interval_distance) {
      return a.interval_distance < b.interval_distance;
    }
    return a.person < b.person;
  });

  for (const PersonId& p : leading) {
    for (const Band& band : bands) {
      if (band.person == p) {
        out.matches.push_back({p, interval_distance(band, d)});
      }
    }
  }
  out.matches.insert(out.matches.end(), rest.begin(), rest.end());
  if (out.matches.size() > max_neighbors) {
    out.matches.erase(out.matches.begin() + static_cast<std::ptrdiff_t>(max_neighbors),
                      out.matches.end());
  }
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> verify_disjoint(
    std::span<const Band> bands) {
  std::vector<std::pair<std::size_t, std::size_t>> overlaps;
  for (std::size_t i = 0; i < bands.size(); ++i) {
    for (std::size_t j = i + 1; j < bands.size(); ++j) {
      const bool apart =
          bands[i].high < bands[j].low || bands[j].high < bands[i].low;
      if (!apart) overlaps.emplace_back(i, j);
    }
  }
  return overlaps;
}

std::string describe(const ClassificationResult& r) {
  std::ostringstream out;
  out << outcome_name(r.outcome) << " d=" << fmt(r.distance_to_mean);
  if (const auto* in = std::get_if<InBand>(&r.outcome)) {
    out << " person=" << in->person.str();
  } else if (const auto* near = std::get_if<NearestBand>(&r.outcome)) {
    out << " person=" << near->person.str() << " gap=" << fmt(near->gap);
  } else if (const auto* tie = std::get_if<AmbiguousTie>(&r.outcome)) {
    out << " persons=" << tie->lower.str() << "," << tie->upper.str();
  }
  return out.str();
}

std::string describe(const IdentifyResult& r) {
  std::ostringstream out;
  out << describe(r.classification) << " [";
  for (const auto& n : r.matches) {
    out << " " << n.person.str() << ":" << fmt(n.interval_distance);
  }
  out << " ]";
  return out.str();
}

OracleReport compare_with_index(const BandedIndex& index,
                                const Gallery& gallery,
                                std::span<const FeatureVector> probes,
                                std::size_t max_neighbors) {
  OracleReport report;
  const double tau = index.options().tie_tolerance;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    ++report.probes;
    const auto& probe = probes[i];
    const ClassificationResult fast = index.classify(probe);
    const ClassificationResult ref =
        linear_scan_classify(gallery, index.mean(), index.bands(), probe, tau);
    if (!(fast == ref)) {
      report.add({"probe #" + std::to_string(i), describe(fast), describe(ref)});
      continue;
    }
    if (index.empty()) continue;
    const IdentifyResult fast_id = index.identify(probe, max_neighbors);
    const IdentifyResult ref_id = linear_scan_identify_distance(
        index.bands(), ref.distance_to_mean, max_neighbors, tau);
    if (!(fast_id == ref_id)) {
      report.add({"probe #" + std::to_string(i) + " (identify)",
                  describe(fast_id), describe(ref_id)});
    }
  }
  return report;
}

Gradients finite_difference_gradient(const Network& network,
                                     const Tensor& input, std::size_t label,
                                     double epsilon) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) {
    throw InvalidArgumentError("epsilon must lie in [1e-7, 1e-3]");
  }
  Network probe = network;
  const auto layers = network.layers();
  Gradients g;
  g.weights.resize(layers.size());
  g.biases.resize(layers.size());

  auto central = [&](double& param) {
    const double saved = param;
    param = saved + epsilon;
    const double up = probe.loss(input, label);
    param = saved - epsilon;
    const double down = probe.loss(input, label);
    param = saved;
    return (up - down) / (2.0 * epsilon);
  };

  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (!layers[i].has_parameters()) continue;
    auto w = probe.weights(i);
    auto b = probe.biases(i);
    g.weights[i].resize(w.size());
    g.biases[i].resize(b.size());
    for (std::size_t k = 0; k < w.size(); ++k) g.weights[i][k] = central(w[k]);
    for (std::size_t k = 0; k < b.size(); ++k) g.biases[i][k] = central(b[k]);
  }
  return g;
}

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

GradientCheck compare_gradients(const Gradients& analytic,
                                const Gradients& numeric, double floor) {
  if (analytic.weights.size() != numeric.weights.size()) {
    throw LayerShapeError("gradient sets cover different layer counts");
  }
  GradientCheck check;
  auto visit = [&](const std::vector<double>& a, const std::vector<double>& n,
                   std::size_t layer, std::size_t offset) {
    if (a.size() != n.size()) {
      throw LayerShapeError("gradient sizes differ at layer " +
                            std::to_string(layer));
    }
    for (std::size_t k = 0; k < a.size(); ++k) {
      ++check.parameters;
      const double e = relative_error(a[k], n[k], floor);
      if (e > check.max_relative_error) {
        check.max_relative_error = e;
        check.worst_layer = layer;
        check.worst_index = offset + k;
      }
    }
  };
  for (std::size_t i = 0; i < analytic.weights.size(); ++i) {
    visit(analytic.weights[i], numeric.weights[i], i, 0);
    visit(analytic.biases[i], numeric.biases[i], i, analytic.weights[i].size());
  }
  return check;
}

}  // namespace emfv::oracle
