#include "emfv/verify.hpp"

#include <cmath>
#include <random>

#include "emfv/errors.hpp"
#include "emfv/synthetic.hpp"

namespace emfv {

VerifyReport verify_snapshot(const SnapshotDocument& doc,
                             std::size_t random_probes, std::uint64_t seed) {
  VerifyReport report;
  report.persons = doc.persons.size();

  std::vector<Band> raw;
  for (const auto& p : doc.persons) {
    raw.push_back(Band{PersonId(p.id.empty() ? "<empty>" : p.id), p.low, p.high});
  }
  for (const auto& [i, j] : oracle::verify_disjoint(raw)) {
    report.overlaps.emplace_back(doc.persons[i].id, doc.persons[j].id);
  }

  for (const auto& p : doc.persons) {
    for (const auto& s : p.samples) {
      ++report.samples;
      if (s.size() != doc.mean.size()) {
        report.samples_outside_band.push_back(p.id);
        continue;
      }
      double d = 0.0;
      for (std::size_t k = 0; k < s.size(); ++k) d += std::abs(s[k] - doc.mean[k]);
      if (!(p.low <= d && d <= p.high)) report.samples_outside_band.push_back(p.id);
    }
  }

  Snapshot snap;
  try {
    snap = snapshot_from_document(doc);
  } catch (const Error& e) {
    report.load_error = e.what();
    return report;
  }
  if (snap.gallery.empty()) return report;

  std::vector<FeatureVector> probes = snap.gallery.all_vectors();
  std::mt19937_64 rng(seed);
  auto extra = synthetic::random_probes(snap.gallery, random_probes, rng);
  probes.insert(probes.end(), extra.begin(), extra.end());
  report.oracle = oracle::compare_with_index(snap.index, snap.gallery, probes,
                                             snap.index.bands().size());
  return report;
}

}  // namespace emfv
